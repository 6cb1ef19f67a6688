//! Central-difference gradient checking.

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Outcome of a finite-difference comparison.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FdReport {
    pub max_rel_error: f64,
    /// Coordinates compared.
    pub probes: usize,
    /// Coordinates left out because `[x − h, x + h]` straddles a kink.
    pub skipped: usize,
}

impl FdReport {
    pub fn merge(self, other: FdReport) -> FdReport {
        FdReport {
            max_rel_error: self.max_rel_error.max(other.max_rel_error),
            probes: self.probes + other.probes,
            skipped: self.skipped + other.skipped,
        }
    }
}

const KINK_TOLERANCE: f64 = 1e-3;

fn compare<F>(f: F, x: &Tensor, h: f64, skip_kinks: bool) -> Result<FdReport>
where
    F: Fn(&Tape, Var) -> Result<Var>,
{
    let tape = Tape::new();
    let xv = tape.param(x.clone());
    let loss = f(&tape, xv)?;
    let f0 = tape.value(loss).item();
    let grads = tape.backward(loss)?;
    let analytic = grads.get(xv).expect("x requires grad").clone();

    let eval = |probe: Tensor| -> Result<f64> {
        let tape = Tape::new();
        let v = tape.constant(probe);
        let out = f(&tape, v)?;
        Ok(tape.value(out).item())
    };

    let mut report = FdReport::default();
    for i in 0..x.numel() {
        let mut plus = x.clone();
        plus.data_mut()[i] += h;
        let mut minus = x.clone();
        minus.data_mut()[i] -= h;
        let (fp, fm) = (eval(plus)?, eval(minus)?);
        // Differences below this are rounding in f, not signal.
        let floor = (1e3 * f64::EPSILON * f0.abs().max(fp.abs()).max(fm.abs()).max(1.0) / h).max(1e-8);
        if skip_kinks {
            let (fwd, bwd) = ((fp - f0) / h, (f0 - fm) / h);
            if (fwd - bwd).abs() > KINK_TOLERANCE * fwd.abs().max(bwd.abs()).max(floor) {
                report.skipped += 1;
                continue;
            }
        }
        let numeric = (fp - fm) / (2.0 * h);
        let a = analytic.data()[i];
        let denom = a.abs().max(numeric.abs()).max(floor);
        report.max_rel_error = report.max_rel_error.max((a - numeric).abs() / denom);
        report.probes += 1;
    }
    Ok(report)
}

/// Compares the tape gradient of the scalar function `f` at `x` with
/// central differences `(f(x+h·eᵢ) − f(x−h·eᵢ)) / 2h`, element by element.
///
/// Returns the largest relative error, measured against
/// `max(|analytic|, |numeric|, floor)` where `floor` is the rounding level
/// of the difference quotient, `1e3·ε·|f| / h`, but at least `1e-8`.
pub fn finite_difference_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&Tape, Var) -> Result<Var>,
{
    compare(f, x, h, false).map(|r| r.max_rel_error)
}

/// Like [`finite_difference_check`] for piecewise-smooth `f` (ReLU, max
/// pooling). A coordinate is skipped when its forward and backward
/// one-sided differences disagree by more than `1e-3` relative, which
/// means a kink lies within `h`; the count is reported. The analytic
/// gradient plays no part in that decision.
pub fn finite_difference_report<F>(f: F, x: &Tensor, h: f64) -> Result<FdReport>
where
    F: Fn(&Tape, Var) -> Result<Var>,
{
    compare(f, x, h, true)
}
