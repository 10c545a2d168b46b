use std::time::Instant;

use crate::error::{Error, Result};
use crate::net::{forward, Inputs, Mode, NetworkSpec, WeightStore};
use crate::tensor::Scalar;
use crate::transform::{remove_downsampling, shift_and_stitch, RewriteOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingReport {
    /// Median wall-clock seconds of shift-and-stitch.
    pub stitch: f64,
    /// Median wall-clock seconds of one pass of the stride-1 network.
    pub no_ds: f64,
    pub runs: usize,
}

impl TimingReport {
    pub fn ratio(&self) -> f64 {
        self.stitch / self.no_ds
    }
}

/// Median of `runs` timings of `f`.
pub fn median_seconds(runs: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    let mut times = Vec::with_capacity(runs);
    for _ in 0..runs {
        let t = Instant::now();
        f()?;
        times.push(t.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    Ok(times[runs / 2])
}

/// Times shift-and-stitch against the rewritten network on the same weights.
/// Runs are sequential.
pub fn time_comparison<T: Scalar>(net: &NetworkSpec, w: &WeightStore<T>, inputs: &Inputs<T>, runs: usize) -> Result<TimingReport> {
    if runs < 3 {
        return Err(Error::Parameter("timing needs at least 3 runs".into()));
    }
    let (dense, _) = remove_downsampling(net, RewriteOptions::default())?;
    let stitch = median_seconds(runs, || shift_and_stitch(net, w, inputs).map(drop))?;
    let no_ds = median_seconds(runs, || forward(&dense, w, inputs, Mode::Test).map(drop))?;
    Ok(TimingReport { stitch, no_ds, runs })
}
