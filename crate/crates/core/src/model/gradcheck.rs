//! Finite-difference checks of whole backbones at toy size.

use rand::Rng as _;
use tsood_tensor::{finite_difference_report, FdReport, Tape, Tensor, Var};

use super::{is_buffer, Arch, ModelArtifacts, ModelConfig, Result};
use crate::seed;

const STEP: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct BackboneCheck {
    pub arch: Arch,
    pub trials: usize,
    pub max_rel_error: f64,
    pub probes: usize,
    /// Probes within `h` of a ReLU or max-pool kink, left out.
    pub skipped: usize,
}

/// Random projection of both outputs to a scalar so every logit and
/// feature contributes to the gradient.
fn contract(tape: &Tape, model: &ModelArtifacts, vars: &indexmap::IndexMap<String, Var>, x: Var, r: &(Tensor, Tensor)) -> tsood_tensor::Result<Var> {
    let out = model
        .forward_tape(tape, vars, x, true)
        .map_err(|e| match e {
            super::ModelError::Tensor(t) => t,
            other => panic!("toy forward failed: {other}"),
        })?;
    let a = tape.mul(out.logits, tape.constant(r.0.clone()))?;
    let b = tape.mul(out.prelogit, tape.constant(r.1.clone()))?;
    tape.add(tape.sum(a)?, tape.sum(b)?)
}

/// Each trial builds a toy model of `arch` with random shape and seed, then
/// compares tape gradients with central differences for the input and one
/// randomly chosen weight tensor, in training mode.
pub fn backbone_gradient_check(arch: Arch, trials: usize, seed_value: u64) -> Result<BackboneCheck> {
    let mut rng = seed::rng(seed::derive(seed_value, arch.name()));
    let mut total = FdReport::default();
    for _ in 0..trials {
        let d = rng.random_range(1..3);
        let l = rng.random_range(4..9);
        let c = rng.random_range(2..4);
        let b = 4;
        let config = ModelConfig::new(arch, d, l, c, rng.random::<u64>()).with_width(4);
        let mut model = ModelArtifacts::build(&config)?;
        // Perturb every weight so biases and norms are not at their trivial init.
        for (name, t) in model.weights.iter_mut() {
            if !is_buffer(name) {
                let t = std::sync::Arc::make_mut(t);
                t.data_mut().iter_mut().for_each(|v| *v += rng.random_range(-0.3..0.3));
            }
        }
        let f = model.feature_dim();
        let mut rand_tensor = |shape: Vec<usize>| {
            let n = shape.iter().product();
            Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("shape")
        };
        let x = rand_tensor(vec![b, d, l]);
        let r = (rand_tensor(vec![b, c]), rand_tensor(vec![b, f]));

        let fd = finite_difference_report(
            |tape, xv| {
                let vars = model.bind(tape, false);
                contract(tape, &model, &vars, xv, &r)
            },
            &x,
            STEP,
        )?;
        total = total.merge(fd);

        let names: Vec<&String> = model.weights.keys().filter(|n| !is_buffer(n)).collect();
        let name = names[rng.random_range(0..names.len())].clone();
        let w0 = (**model.weights.get(&name).expect("listed")).clone();
        let fd = finite_difference_report(
            |tape, wv| {
                let mut vars = model.bind(tape, false);
                vars.insert(name.clone(), wv);
                let xv = tape.constant(x.clone());
                contract(tape, &model, &vars, xv, &r)
            },
            &w0,
            STEP,
        )?;
        total = total.merge(fd);
    }
    Ok(BackboneCheck {
        arch,
        trials,
        max_rel_error: total.max_rel_error,
        probes: total.probes,
        skipped: total.skipped,
    })
}
