use super::TrainConfig;
use crate::models::PAGAN_LEVEL_CAP;

/// PAGAN augmentation level implied by a run's KID history.
///
/// The history is scanned in order. Once at least two windows of
/// evaluations have accumulated since the last level change, the best KID of
/// the latest window is compared with the best of the window before; a
/// relative improvement below `pagan_stall_epsilon` counts as a stall and
/// raises the level by one (up to the cap). Windows restart after each
/// change, so a flat history of length `2·window` gives level 1 and the
/// level then rises every further `2·window` evaluations.
pub fn pagan_schedule(kid_history: &[f64], config: &TrainConfig) -> usize {
    let window = config.pagan_stall_window.max(1);
    let cap = config.pagan_max_level.min(PAGAN_LEVEL_CAP);
    let mut level = 0;
    let mut since = 0;
    for i in 0..kid_history.len() {
        if level >= cap {
            break;
        }
        let end = i + 1;
        if end - since < 2 * window {
            continue;
        }
        let best = |s: &[f64]| s.iter().copied().fold(f64::INFINITY, f64::min);
        let latest = best(&kid_history[end - window..end]);
        let previous = best(&kid_history[end - 2 * window..end - window]);
        let improvement = if previous.abs() > f64::EPSILON {
            (previous - latest) / previous.abs()
        } else {
            previous - latest
        };
        if improvement < config.pagan_stall_epsilon {
            level += 1;
            since = end;
        }
    }
    level
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> TrainConfig {
        TrainConfig::default()
    }

    #[test]
    fn improving_history_stays_at_zero() {
        let h: Vec<f64> = (0..40).map(|i| 0.5 * 0.9f64.powi(i)).collect();
        assert_eq!(pagan_schedule(&h, &cfg()), 0);
    }

    #[test]
    fn flat_history_steps_up_then_saturates() {
        let flat = |n| vec![0.1; n];
        assert_eq!(pagan_schedule(&flat(5), &cfg()), 0);
        assert_eq!(pagan_schedule(&flat(6), &cfg()), 1);
        assert_eq!(pagan_schedule(&flat(11), &cfg()), 1);
        assert_eq!(pagan_schedule(&flat(12), &cfg()), 2);
        assert_eq!(pagan_schedule(&flat(500), &cfg()), 2);
    }

    #[test]
    fn respects_configured_cap() {
        let c = TrainConfig {
            pagan_max_level: 1,
            ..cfg()
        };
        assert_eq!(pagan_schedule(&[0.1; 50], &c), 1);
    }

    #[test]
    fn small_relative_gain_is_a_stall() {
        // 1% better than the previous window's best: below the 2% threshold.
        let h = [0.100, 0.100, 0.100, 0.0995, 0.099, 0.0995];
        assert_eq!(pagan_schedule(&h, &cfg()), 1);
        let h = [0.100, 0.100, 0.100, 0.095, 0.099, 0.0995];
        assert_eq!(pagan_schedule(&h, &cfg()), 0);
    }

    proptest! {
        #[test]
        fn trace_is_monotone_and_bounded(h in prop::collection::vec(0.0f64..1.0, 0..60)) {
            let mut last = 0;
            for k in 0..=h.len() {
                let level = pagan_schedule(&h[..k], &cfg());
                prop_assert!(level >= last && level <= 2);
                last = level;
            }
        }
    }
}
