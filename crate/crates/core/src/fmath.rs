//! Scalar float helpers routed through `libm` so std and no_std builds
//! produce bit-identical results.

#[inline(always)]
pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}

#[inline(always)]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline(always)]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline(always)]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline(always)]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

#[inline(always)]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline(always)]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline(always)]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline(always)]
pub fn pow(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}
