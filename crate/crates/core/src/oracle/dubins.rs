use std::f64::consts::PI;

/// Helix reference `(0.5 sin 2πt, 0.5 cos 2πt, t)`.
pub fn dubins_reference(t: f64) -> [f64; 3] {
    let w = 2.0 * PI * t;
    [0.5 * w.sin(), 0.5 * w.cos(), t]
}

/// Time derivative of [`dubins_reference`].
pub fn dubins_reference_velocity(t: f64) -> [f64; 3] {
    let w = 2.0 * PI * t;
    [PI * w.cos(), -PI * w.sin(), 1.0]
}

/// Speed of the reference helix, `√(π² + 1)`.
pub fn dubins_reference_speed() -> f64 {
    (PI * PI + 1.0).sqrt()
}
