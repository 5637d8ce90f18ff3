//! Double-double accumulation.
//!
//! Gradient statistics are summed in roughly 106-bit precision and rounded
//! once, so a row with integer case weight `k` contributes the same rounded
//! totals as `k` replicated copies of that row.

/// Error-free transformation `a + b = s + e`.
#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Accumulator {
    hi: f64,
    lo: f64,
}

impl Accumulator {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let (s, e) = two_sum(self.hi, x);
        let lo = self.lo + e;
        let (hi, lo) = two_sum(s, lo);
        self.hi = hi;
        self.lo = lo;
    }

    /// Adds the exact product `a * b`.
    #[inline]
    pub fn add_product(&mut self, a: f64, b: f64) {
        let p = a * b;
        let err = a.mul_add(b, -p);
        self.add(p);
        self.add(err);
    }

    #[inline]
    pub fn sub(&self, other: &Accumulator) -> Accumulator {
        let mut out = *self;
        out.add(-other.hi);
        out.add(-other.lo);
        out
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.hi + self.lo
    }
}
