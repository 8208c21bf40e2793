use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{OhlcvBar, OhlcvSeries};
use crate::error::{Error, Result};

/// Smallest fraction of the original price a noisy price may fall to.
const PRICE_FLOOR_FRACTION: f64 = 0.01;

/// Cartesian product of shift, filter and noise variants; each combination
/// yields one derived series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationSpec {
    /// Bars dropped from the start of the series.
    pub shifts: Vec<usize>,
    /// Trailing moving-average windows applied to prices; 1 is no filtering.
    pub filter_windows: Vec<usize>,
    /// Multiplicative Gaussian noise standard deviations (fraction of price).
    pub noise_levels: Vec<f64>,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        Self {
            shifts: vec![0, 1, 2],
            filter_windows: vec![1, 5],
            noise_levels: vec![0.0, 0.002],
        }
    }
}

impl AugmentationSpec {
    /// The original series only.
    pub fn none() -> Self {
        Self {
            shifts: vec![0],
            filter_windows: vec![1],
            noise_levels: vec![0.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.shifts.is_empty() || self.filter_windows.is_empty() || self.noise_levels.is_empty()
        {
            return Err(Error::Config(
                "augmentation needs at least one value per axis".into(),
            ));
        }
        if self.filter_windows.contains(&0) {
            return Err(Error::Config(
                "augmentation filter windows must be >= 1".into(),
            ));
        }
        if self.noise_levels.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::Config(
                "noise levels must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn variant_count(&self) -> usize {
        self.shifts.len() * self.filter_windows.len() * self.noise_levels.len()
    }
}

#[derive(Debug, Clone)]
pub struct Augmented {
    pub series: Vec<OhlcvSeries>,
    /// Prices that noise pushed below the floor and were clipped.
    pub clipped: usize,
}

/// Derives one series per (shift, filter, noise) combination. Each variant
/// draws from its own ChaCha stream, so output depends only on (spec, seed).
pub fn augment(series: &OhlcvSeries, spec: &AugmentationSpec, rng_seed: u64) -> Result<Augmented> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.variant_count());
    let mut clipped = 0;
    let mut stream = 0u64;
    for &shift in &spec.shifts {
        if shift >= series.len() {
            return Err(Error::SeriesTooShort {
                needed: shift + 1,
                actual: series.len(),
            });
        }
        let shifted = series.slice(shift..series.len());
        for &window in &spec.filter_windows {
            let filtered = smooth_prices(&shifted, window);
            for &sigma in &spec.noise_levels {
                let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
                rng.set_stream(stream);
                stream += 1;
                let (noisy, n) = add_noise(&filtered, sigma, &mut rng);
                clipped += n;
                out.push(noisy);
            }
        }
    }
    if clipped > 0 {
        warn!(
            "{}: {clipped} noisy prices clipped at the positivity floor",
            series.instrument
        );
    }
    Ok(Augmented {
        series: out,
        clipped,
    })
}

/// Trailing (expanding at the start) moving average of each price column.
/// Averages of bars that satisfy `low <= open, close <= high` satisfy it too.
fn smooth_prices(series: &OhlcvSeries, window: usize) -> OhlcvSeries {
    if window <= 1 {
        return series.clone();
    }
    let bars = series.bars();
    let smoothed = (0..bars.len())
        .map(|t| {
            let from = (t + 1).saturating_sub(window);
            let span = &bars[from..=t];
            let n = span.len() as f64;
            let avg = |f: fn(&OhlcvBar) -> f64| span.iter().map(f).sum::<f64>() / n;
            let open = avg(|b| b.open);
            let close = avg(|b| b.close);
            OhlcvBar {
                date: bars[t].date,
                open,
                close,
                // Guard the ordering against rounding in the separate sums.
                high: avg(|b| b.high).max(open).max(close),
                low: avg(|b| b.low).min(open).min(close),
                volume: bars[t].volume,
            }
        })
        .collect();
    OhlcvSeries::new(series.instrument.clone(), smoothed)
        .expect("smoothing preserves bar invariants")
}

fn add_noise(series: &OhlcvSeries, sigma: f64, rng: &mut ChaCha8Rng) -> (OhlcvSeries, usize) {
    if sigma == 0.0 {
        return (series.clone(), 0);
    }
    let mut clipped = 0;
    let mut perturb = |p: f64, rng: &mut ChaCha8Rng| {
        let z: f64 = StandardNormal.sample(rng);
        let q = p * (1.0 + sigma * z);
        let floor = p * PRICE_FLOOR_FRACTION;
        if q < floor {
            clipped += 1;
            floor
        } else {
            q
        }
    };
    let bars = series
        .bars()
        .iter()
        .map(|b| {
            let open = perturb(b.open, rng);
            let close = perturb(b.close, rng);
            let high = perturb(b.high, rng).max(open).max(close);
            let low = perturb(b.low, rng).min(open).min(close);
            let zv: f64 = StandardNormal.sample(rng);
            OhlcvBar {
                date: b.date,
                open,
                high,
                low,
                close,
                volume: (b.volume * (1.0 + sigma * zv)).max(0.0),
            }
        })
        .collect();
    let out =
        OhlcvSeries::new(series.instrument.clone(), bars).expect("noise keeps bar invariants");
    (out, clipped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::synthetic::{bars_from_closes, sine_closes};

    #[test]
    fn identity_augmentation() {
        let s = bars_from_closes("X", &sine_closes(60, 20.0, 0.1));
        let out = augment(&s, &AugmentationSpec::none(), 1).unwrap();
        assert_eq!(out.series.len(), 1);
        assert_eq!(out.series[0], s);
    }

    #[test]
    fn noise_is_reproducible_per_seed() {
        let s = bars_from_closes("X", &[100.0; 30]);
        let spec = AugmentationSpec {
            shifts: vec![0],
            filter_windows: vec![1],
            noise_levels: vec![0.005],
        };
        let a = augment(&s, &spec, 42).unwrap();
        let b = augment(&s, &spec, 42).unwrap();
        let c = augment(&s, &spec, 43).unwrap();
        let closes = |x: &Augmented| x.series[0].closes();
        assert_eq!(
            closes(&a).iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            closes(&b).iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_ne!(closes(&a), closes(&c));
        assert!(closes(&a).iter().any(|&v| v != 100.0));
    }

    #[test]
    fn filtered_step_keeps_invariants() {
        let closes: Vec<f64> = (0..30)
            .map(|i| if i < 15 { 100.0 } else { 120.0 })
            .collect();
        let s = bars_from_closes("STEP", &closes);
        let spec = AugmentationSpec {
            shifts: vec![0],
            filter_windows: vec![5],
            noise_levels: vec![0.0],
        };
        let out = augment(&s, &spec, 0).unwrap().series.remove(0);
        for b in out.bars() {
            b.validate().unwrap();
        }
        let c = out.closes();
        // The jump is spread over the filter window.
        assert!(c[15] > 100.0 && c[15] < 120.0);
        assert!((c[19] - 120.0).abs() < 1e-12);
        assert!(c.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn default_spec_enumerates_all_combinations() {
        let s = bars_from_closes("X", &sine_closes(80, 20.0, 0.1));
        let out = augment(&s, &AugmentationSpec::default(), 9).unwrap();
        assert_eq!(out.series.len(), 12);
        assert_eq!(out.series[0], s);
        assert_eq!(out.series[4].len(), 79);
    }

    #[test]
    fn huge_noise_is_clipped_and_counted() {
        let s = bars_from_closes("X", &[100.0; 200]);
        let spec = AugmentationSpec {
            shifts: vec![0],
            filter_windows: vec![1],
            noise_levels: vec![2.0],
        };
        let out = augment(&s, &spec, 5).unwrap();
        assert!(out.clipped > 0);
        assert!(out.series[0].bars().iter().all(|b| b.low > 0.0));
    }
}
