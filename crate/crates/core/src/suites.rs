//! Verification suites (filled in below).

/// One verification check: a measured value against its threshold.
#[derive(Debug, Clone)]
pub struct CheckRow {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub pass: bool,
}
