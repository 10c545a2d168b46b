use super::train::{tile_pass, TrainTile};
use crate::error::{Error, Result};
use crate::net::{Mode, NetworkSpec, WeightStore};

/// Relative errors are taken against at least this magnitude, so parameters
/// with vanishing gradient are judged on absolute error.
const REL_FLOOR: f64 = 1e-6;
/// Inputs are pushed at least this far from zero.
const INPUT_NUDGE: f64 = 1e-2;
const DROPOUT_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `layer[index]` of the worst parameter.
    pub worst: String,
    pub checked: usize,
    /// Parameters whose perturbation flipped a relu or pooling decision.
    pub skipped: usize,
}

/// Compares backward against central differences on every parameter, with
/// the training loss (including dropout with a fixed mask and the
/// upsampling of coarse outputs).
pub fn grad_check(net: &NetworkSpec, w: &WeightStore<f64>, tiles: &[TrainTile<f64>], eps: f64) -> Result<GradCheckReport> {
    if tiles.is_empty() {
        return Err(Error::Data("no tiles to check against".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::Parameter("eps must be positive".into()));
    }
    let tiles: Vec<TrainTile<f64>> = tiles
        .iter()
        .map(|t| {
            let mut t = t.clone();
            for x in t.inputs.values_mut() {
                for v in x.data_mut() {
                    if v.abs() < INPUT_NUDGE {
                        *v = if *v < 0.0 { -INPUT_NUDGE } else { INPUT_NUDGE };
                    }
                }
            }
            t
        })
        .collect();
    let denominator: usize = tiles
        .iter()
        .map(|t| t.mask.width() * t.mask.height() - t.mask.count())
        .sum();
    let evaluate = |w: &WeightStore<f64>, grad: bool| -> Result<(f64, Vec<u64>, Option<WeightStore<f64>>)> {
        let mut loss = 0.0;
        let mut structure = Vec::with_capacity(tiles.len());
        let mut grads: Option<WeightStore<f64>> = None;
        for (i, t) in tiles.iter().enumerate() {
            let mode = Mode::Train {
                seed: DROPOUT_SEED + i as u64,
            };
            let p = tile_pass(net, w, t, denominator, mode, grad)?;
            loss += p.loss_sum;
            structure.push(p.structure);
            if let Some(g) = p.grads {
                match &mut grads {
                    None => grads = Some(g),
                    Some(acc) => {
                        for ((_, a), (_, b)) in acc.iter_mut().zip(g.iter()) {
                            a.kernel.add_assign(&b.kernel)?;
                            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
                        }
                    }
                }
            }
        }
        Ok((loss, structure, grads))
    };

    let (_, base_structure, grads) = evaluate(w, true)?;
    let analytic = grads.expect("requested").flatten();
    let mut names = Vec::with_capacity(analytic.len());
    for (name, cw) in w.iter() {
        names.extend((0..cw.len()).map(|i| format!("{name}[{i}]")));
    }
    let mut probe = w.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        checked: 0,
        skipped: 0,
    };
    for (k, &a) in analytic.iter().enumerate() {
        let orig = *probe.param_mut(k).expect("index within flatten");
        *probe.param_mut(k).expect("index") = orig + eps;
        let (plus, s_plus, _) = evaluate(&probe, false)?;
        *probe.param_mut(k).expect("index") = orig - eps;
        let (minus, s_minus, _) = evaluate(&probe, false)?;
        *probe.param_mut(k).expect("index") = orig;
        if s_plus != base_structure || s_minus != base_structure {
            report.skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * eps);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        report.checked += 1;
        if report.worst.is_empty() || rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst = names[k].clone();
        }
    }
    if report.checked == 0 && !analytic.is_empty() {
        return Err(Error::State("every parameter sits on a relu or pooling kink".into()));
    }
    Ok(report)
}
