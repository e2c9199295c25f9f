//! Sampling-based suprema with golden-section refinement.

/// Magnitude model of one term of a weighted exponential polynomial:
/// `amplitude * t^power * e^{-decay t}` oscillating at `frequency`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct TailTerm {
    pub amplitude: f64,
    pub power: u32,
    pub decay: f64,
    pub frequency: f64,
}

const MAX_SAMPLES: usize = 400_000;
const REFINED_PEAKS: usize = 16;

pub(crate) fn golden_max(value: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let mut f1 = value(x1);
    let mut f2 = value(x2);
    let mut best = f1.max(f2);
    for _ in 0..90 {
        if hi - lo <= 1e-15 * hi.abs().max(1.0) {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = value(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = value(x1);
        }
        best = best.max(f1).max(f2);
    }
    best
}

/// Maximum of `value` on `[lo, hi]` from `n` uniform samples plus refinement
/// of the largest local maxima.
pub(crate) fn sup_interval(value: &dyn Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let n = n.clamp(2, MAX_SAMPLES);
    let dt = (hi - lo) / n as f64;
    let samples: Vec<f64> = (0..=n).map(|i| value(lo + i as f64 * dt)).collect();
    let mut best = samples.iter().cloned().fold(0.0, f64::max);
    let mut peaks: Vec<usize> = (0..=n)
        .filter(|&i| {
            let left = if i == 0 { f64::NEG_INFINITY } else { samples[i - 1] };
            let right = if i == n { f64::NEG_INFINITY } else { samples[i + 1] };
            samples[i] >= left && samples[i] >= right
        })
        .collect();
    peaks.sort_by(|&a, &b| samples[b].total_cmp(&samples[a]));
    for &i in peaks.iter().take(REFINED_PEAKS) {
        let a = lo + (i.saturating_sub(1)) as f64 * dt;
        let b = lo + (i + 1).min(n) as f64 * dt;
        best = best.max(golden_max(value, a, b));
    }
    best
}

/// Supremum over `[0, inf)` of a weighted exponential polynomial whose terms
/// are described by `tails` (decay already includes the weight).
pub(crate) fn sup_weighted(value: &dyn Fn(f64) -> f64, tails: &[TailTerm]) -> f64 {
    let total: f64 = tails.iter().map(|t| t.amplitude).sum();
    if total == 0.0 {
        return 0.0;
    }
    let persistent: f64 = tails
        .iter()
        .filter(|t| t.decay == 0.0)
        .map(|t| t.amplitude)
        .sum();
    let decaying: Vec<&TailTerm> = tails.iter().filter(|t| t.decay > 0.0).collect();
    let tail_at = |t: f64| -> f64 {
        decaying
            .iter()
            .map(|d| d.amplitude * t.powi(d.power as i32) * (-d.decay * t).exp())
            .sum()
    };
    let omega = tails.iter().map(|t| t.frequency.abs()).fold(0.0, f64::max);
    let b_max = decaying.iter().map(|t| t.decay).fold(0.0, f64::max);

    let mut horizon = if decaying.is_empty() {
        let freqs: Vec<f64> = tails.iter().map(|t| t.frequency).collect();
        let mut gap = f64::INFINITY;
        for (i, a) in freqs.iter().enumerate() {
            for b in &freqs[i + 1..] {
                let d = (a - b).abs();
                if d > 1e-12 {
                    gap = gap.min(d);
                }
            }
        }
        if gap.is_finite() {
            40.0 * std::f64::consts::PI / gap
        } else {
            1.0
        }
    } else {
        decaying
            .iter()
            .map(|t| (t.power as f64 + 1.0) / t.decay)
            .fold(0.0, f64::max)
    };
    if !decaying.is_empty() {
        let threshold = 1e-17 * total;
        while tail_at(horizon) > threshold && horizon < 1e7 {
            horizon *= 1.5;
        }
        // stay past every monotone-decrease point
        horizon = horizon.max(
            decaying
                .iter()
                .map(|t| t.power as f64 / t.decay)
                .fold(0.0, f64::max),
        );
    }
    let resolution = 0.2 / (2.0 * omega + b_max).max(1e-300);
    let n = ((horizon / resolution).ceil() as usize).max(4000);
    let sampled = sup_interval(value, 0.0, horizon, n);
    sampled.max(persistent + tail_at(horizon))
}
