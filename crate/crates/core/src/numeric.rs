//! Small numeric building blocks shared by the solvers.
//!
//! Reductions here are sequential and index-ordered so results do not depend
//! on thread scheduling; accuracy comes from Neumaier compensation rather
//! than from reduction trees.

/// Neumaier-compensated accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self {
            sum: 0.0,
            comp: 0.0,
        }
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn scale(&mut self, factor: f64) {
        self.sum *= factor;
        self.comp *= factor;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum of an iterator of terms.
pub(crate) fn sum_compensated(terms: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = CompensatedSum::new();
    for t in terms {
        acc.add(t);
    }
    acc.value()
}

/// Compensated weighted dot product `Σ w_i v_i`.
pub(crate) fn dot_compensated(w: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(w.len(), v.len());
    sum_compensated(w.iter().zip(v).map(|(a, b)| a * b))
}

/// Streaming shifted log-sum-exp: `ln Σ exp(t_i)` without materializing the
/// terms. The running maximum is the shift, so no intermediate overflows as
/// long as each individual `t_i` is below `f64::MAX` in magnitude.
#[derive(Clone, Copy, Debug)]
pub(crate) struct LogSumExp {
    max: f64,
    acc: CompensatedSum,
}

impl LogSumExp {
    pub fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            acc: CompensatedSum::new(),
        }
    }

    #[inline]
    pub fn push(&mut self, t: f64) {
        if t == f64::NEG_INFINITY {
            return; // exp(-inf) contributes nothing
        }
        if t <= self.max {
            self.acc.add((t - self.max).exp());
        } else {
            if self.max != f64::NEG_INFINITY {
                self.acc.scale((self.max - t).exp());
            }
            self.acc.add(1.0);
            self.max = t;
        }
    }

    /// `ln Σ exp(t_i)`; `-inf` when nothing finite was pushed.
    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.acc.value().ln()
        }
    }
}

/// Sup-norm distance between two equal-length slices.
pub(crate) fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Squared Euclidean distance.
#[inline]
pub(crate) fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let mut s = 0.0;
    for (a, b) in x.iter().zip(y) {
        let d = a - b;
        s += d * d;
    }
    s
}
