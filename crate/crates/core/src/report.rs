use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    /// `a(t+h) ≥ a(t) + h·a'(t) + r(|h|)·a''(t)/2` failed.
    RateInequality,
    /// `(β−β*)'H(β−β*)/(2c) ≥ D(β*, β)` failed.
    QuadraticUpper,
    /// `D(β*, β) ≥ (β−β*)'H(β−β*)/2` failed.
    QuadraticLower,
    /// `c` outside `(1/2, 1]`.
    CurvatureRatio,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Where the check failed: `(t, h)` for rate checks, `β` for quadratic checks.
    pub point: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ViolationReport {
    pub checked: usize,
    pub violations: Vec<Violation>,
}

impl ViolationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }
}
