use num_traits::{Float, FloatConst, NumAssign};

/// Scalar abstraction so the PDF and network code can run in f32 for
/// production and f64 for finite-difference gradient checks.
pub trait Real:
    Float + FloatConst + NumAssign + Copy + Send + Sync + std::fmt::Debug + std::fmt::Display + 'static
{
    fn of(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn to_le_bytes_vec(self) -> Vec<u8>;
}

impl Real for f32 {
    fn of(x: f64) -> f32 {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn to_le_bytes_vec(self) -> Vec<u8> {
        self.to_le_bytes().to_vec()
    }
}

impl Real for f64 {
    fn of(x: f64) -> f64 {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn to_le_bytes_vec(self) -> Vec<u8> {
        self.to_le_bytes().to_vec()
    }
}
