use serde::{Deserialize, Serialize};

/// Finite tap vector with an explicit support window `[t_min, t_max]`.
///
/// Offset `j` shifts a signal `j` timesteps into the past: applying the filter
/// at sequence position `i` reads `x[i - j]`. Negative offsets look ahead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Filter {
    taps: Vec<f64>,
    t_min: i64,
}

impl Filter {
    pub fn new(taps: Vec<f64>, t_min: i64) -> Self {
        assert!(!taps.is_empty(), "filter needs at least one tap");
        assert!(taps.iter().all(|t| t.is_finite()), "taps must be finite");
        Filter { taps, t_min }
    }

    /// Causal filter with support starting at offset 0.
    pub fn causal(taps: Vec<f64>) -> Self {
        Filter::new(taps, 0)
    }

    /// The delay filter: a single unit tap at offset `i`.
    pub fn delay(i: i64) -> Self {
        Filter::new(vec![1.0], i)
    }

    /// Exponential-decay filter `rho^j` for offsets `0..window`.
    pub fn exp_decay(rho: f64, window: usize) -> Self {
        assert!(window >= 1);
        Filter::causal((0..window).map(|j| rho.powi(j as i32)).collect())
    }

    pub fn t_min(&self) -> i64 {
        self.t_min
    }

    pub fn t_max(&self) -> i64 {
        self.t_min + self.taps.len() as i64 - 1
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn is_causal(&self) -> bool {
        self.t_min >= 0
    }

    /// Tap at the given offset; zero outside the support window.
    pub fn tap_at(&self, offset: i64) -> f64 {
        if offset < self.t_min || offset > self.t_max() {
            0.0
        } else {
            self.taps[(offset - self.t_min) as usize]
        }
    }

    pub fn iter_taps(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.taps
            .iter()
            .enumerate()
            .map(move |(k, &t)| (self.t_min + k as i64, t))
    }

    /// `sum_j |self_j - other_j|` over the union of supports.
    pub fn l1_distance(&self, other: &Filter) -> f64 {
        let lo = self.t_min.min(other.t_min);
        let hi = self.t_max().max(other.t_max());
        (lo..=hi)
            .map(|j| (self.tap_at(j) - other.tap_at(j)).abs())
            .sum()
    }

    pub fn l1_norm(&self) -> f64 {
        self.taps.iter().map(|t| t.abs()).sum()
    }

    /// Filter composition: `(self * other)` so that convolving a sequence with
    /// the result equals convolving with `other` and then with `self`.
    pub fn compose(&self, other: &Filter) -> Filter {
        let t_min = self.t_min + other.t_min;
        let len = self.taps.len() + other.taps.len() - 1;
        let mut taps = vec![0.0; len];
        for (i, &a) in self.taps.iter().enumerate() {
            for (j, &b) in other.taps.iter().enumerate() {
                taps[i + j] += a * b;
            }
        }
        Filter::new(taps, t_min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delay_has_single_unit_tap() {
        let d = Filter::delay(3);
        assert_eq!(d.tap_at(3), 1.0);
        assert_eq!(d.tap_at(2), 0.0);
        assert_eq!(d.t_min(), 3);
        assert_eq!(d.t_max(), 3);
        assert!(d.is_causal());
        assert!(!Filter::delay(-1).is_causal());
    }

    #[test]
    fn l1_distance_uses_union_of_supports() {
        let f = Filter::new(vec![1.0, 0.25], -1); // taps at -1 and 0
        let d = Filter::delay(-1);
        assert!((f.l1_distance(&d) - 0.25).abs() < 1e-15);
        assert!((d.l1_distance(&f) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn composing_delays_adds_offsets() {
        let c = Filter::delay(2).compose(&Filter::delay(-1));
        assert_eq!(c.tap_at(1), 1.0);
        assert_eq!(c.len(), 1);
    }
}
