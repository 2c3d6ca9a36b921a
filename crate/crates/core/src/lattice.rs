//! The admissible grade set {0, 0.5, ..., 5.0}.

pub const GRADE_MIN: f64 = 0.0;
pub const GRADE_MAX: f64 = 5.0;
pub const GRADE_STEP: f64 = 0.5;

/// True when `g` lies in [0, 5] and is an integer multiple of 0.5.
pub fn is_on_lattice(g: f64) -> bool {
    if !g.is_finite() || !(GRADE_MIN..=GRADE_MAX).contains(&g) {
        return false;
    }
    let halves = g / GRADE_STEP;
    (halves - halves.round()).abs() < 1e-9
}

/// Clamp to [0, 5] then round to the nearest 0.5, ties up.
pub fn quantize_half(g: f64) -> f64 {
    round_half_up(g.clamp(GRADE_MIN, GRADE_MAX))
}

/// Round to the nearest multiple of 0.5 with ties going up (2.25 -> 2.5).
pub fn round_half_up(g: f64) -> f64 {
    (g / GRADE_STEP + 0.5).floor() * GRADE_STEP
}

/// All eleven lattice values in ascending order.
pub fn lattice_values() -> impl Iterator<Item = f64> {
    (0..=10).map(|i| i as f64 * GRADE_STEP)
}
