//! Small numerical helpers shared across modules.

/// Streaming log-sum-exp accumulator.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    sum: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self { max: f64::NEG_INFINITY, sum: 0.0 }
    }
}

impl LogSumExp {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, a: f64) {
        if a == f64::NEG_INFINITY {
            return;
        }
        if a <= self.max {
            self.sum += (a - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - a).exp() + 1.0;
            self.max = a;
        }
    }

    /// `log Σ exp(a_i)`; `-inf` when nothing was pushed.
    pub fn value(&self) -> f64 {
        if self.sum == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }

    pub fn max(&self) -> f64 {
        self.max
    }
}

pub fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = LogSumExp::new();
    for v in values {
        acc.push(v);
    }
    acc.value()
}

/// Composite trapezoid weight of node `i` out of `n` with spacing `h`.
#[inline]
pub fn trapezoid_weight(i: usize, n: usize, h: f64) -> f64 {
    if i == 0 || i + 1 == n {
        0.5 * h
    } else {
        h
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    let h = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| if i + 1 == n { hi } else { lo + h * i as f64 }).collect()
}

/// Visit every node of a tensor grid of up to three axes, passing the node
/// coordinates and its trapezoid weight.
pub fn for_each_tensor_node(axes: &[(f64, f64, usize)], mut visit: impl FnMut(&[f64], f64)) {
    let d = axes.len();
    assert!((1..=3).contains(&d));
    let h: Vec<f64> = axes.iter().map(|&(lo, hi, n)| (hi - lo) / (n - 1) as f64).collect();
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    loop {
        let mut w = 1.0;
        for a in 0..d {
            let (lo, _, n) = axes[a];
            x[a] = lo + h[a] * idx[a] as f64;
            w *= trapezoid_weight(idx[a], n, h[a]);
        }
        visit(&x, w);
        let mut a = 0;
        loop {
            idx[a] += 1;
            if idx[a] < axes[a].2 {
                break;
            }
            idx[a] = 0;
            a += 1;
            if a == d {
                return;
            }
        }
    }
}

/// Thomas-algorithm factorisation of a constant tridiagonal matrix.
///
/// `sub[i]` multiplies `x[i-1]` in row `i`, `sup[i]` multiplies `x[i+1]`.
#[derive(Debug, Clone)]
pub struct Tridiagonal {
    sub: Vec<f64>,
    sup_prime: Vec<f64>,
    denom: Vec<f64>,
}

impl Tridiagonal {
    pub fn factor(sub: &[f64], diag: &[f64], sup: &[f64]) -> Self {
        let n = diag.len();
        assert!(sub.len() == n && sup.len() == n && n >= 2);
        let mut sup_prime = vec![0.0; n];
        let mut denom = vec![0.0; n];
        denom[0] = diag[0];
        sup_prime[0] = sup[0] / denom[0];
        for i in 1..n {
            denom[i] = diag[i] - sub[i] * sup_prime[i - 1];
            sup_prime[i] = if i + 1 < n { sup[i] / denom[i] } else { 0.0 };
        }
        Self { sub: sub.to_vec(), sup_prime, denom }
    }

    pub fn len(&self) -> usize {
        self.denom.len()
    }

    pub fn is_empty(&self) -> bool {
        self.denom.is_empty()
    }

    /// Solve in place; `rhs` is overwritten by the solution.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = self.denom.len();
        rhs[0] /= self.denom[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.sub[i] * rhs[i - 1]) / self.denom[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.sup_prime[i] * rhs[i + 1];
        }
    }
}
