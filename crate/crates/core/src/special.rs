//! Small cancellation-free helpers for exponential expressions.

/// `(e^x - 1) / x`, equal to 1 at `x = 0`.
pub fn phi1(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.exp_m1() / x
    }
}

/// `(e^x - 1 - x - x^2/2) / x^3`, equal to 1/6 at `x = 0`.
///
/// Uses the Taylor series `sum x^j / (j + 3)!` for `|x| <= 1`.
pub fn phi3(x: f64) -> f64 {
    if x.abs() <= 1.0 {
        let mut term: f64 = 1.0 / 6.0;
        let mut sum: f64 = 0.0;
        let mut j = 0.0;
        while term.abs() > 1e-18 * sum.abs() || sum == 0.0 {
            sum += term;
            j += 1.0;
            term *= x / (j + 3.0);
            if term == 0.0 {
                break;
            }
        }
        sum
    } else {
        (x.exp_m1() - x - 0.5 * x * x) / (x * x * x)
    }
}

/// Compensated (Neumaier) running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}
