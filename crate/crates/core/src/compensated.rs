//! Error-free transformations for accurate dot products.
//!
//! Raw-moment inner products cancel heavily once the basis reaches degree 6+
//! with correlated inputs, so sums that feed Gram-Schmidt are carried in
//! double-double precision (TwoSum / TwoProduct via fused multiply-add).

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Double-double accumulator for sums of products.
#[derive(Debug, Clone, Copy, Default)]
pub struct Accumulator {
    hi: f64,
    lo: f64,
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let (s, e) = two_sum(self.hi, x);
        self.hi = s;
        self.lo += e;
    }

    /// Adds `a * b` exactly rounded into the accumulator.
    #[inline]
    pub fn add_prod(&mut self, a: f64, b: f64) {
        let (p, pe) = two_prod(a, b);
        let (s, e) = two_sum(self.hi, p);
        self.hi = s;
        self.lo += e + pe;
    }

    /// Adds `a * b * c`, keeping the rounding error of the first product.
    #[inline]
    pub fn add_prod3(&mut self, a: f64, b: f64, c: f64) {
        let (p, pe) = two_prod(a, b);
        let (q, qe) = two_prod(p, c);
        let (s, e) = two_sum(self.hi, q);
        self.hi = s;
        self.lo += e + qe + pe * c;
    }

    pub fn value(&self) -> f64 {
        self.hi + self.lo
    }
}

/// Compensated dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = Accumulator::new();
    for (x, y) in a.iter().zip(b) {
        acc.add_prod(*x, *y);
    }
    acc.value()
}
