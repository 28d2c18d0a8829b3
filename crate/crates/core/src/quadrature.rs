//! Quadrature plumbing: Gauss-Legendre rules, a deterministic adaptive 2D
//! integrator for scalar integrands, and a uniform-grid Simpson integrator
//! used as an independent cross-check.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// 4-point Gauss-Legendre nodes and weights on [-1, 1].
pub(crate) const G4_NODES: [f64; 4] = [
    -0.8611363115940526,
    -0.3399810435848563,
    0.3399810435848563,
    0.8611363115940526,
];
pub(crate) const G4_WEIGHTS: [f64; 4] = [
    0.34785484513745385,
    0.6521451548625461,
    0.6521451548625461,
    0.34785484513745385,
];

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        nodes[i] = -x; // initial guesses descend, so this comes out ascending
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Integral of f over [a, b] with an n-point Gauss-Legendre rule.
pub fn integrate_1d(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    if a == b {
        return 0.0;
    }
    let (nodes, weights) = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for (x, w) in nodes.iter().zip(&weights) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn split(&self) -> [Rect; 4] {
        let xm = 0.5 * (self.x0 + self.x1);
        let ym = 0.5 * (self.y0 + self.y1);
        [
            Rect::new(self.x0, xm, self.y0, ym),
            Rect::new(xm, self.x1, self.y0, ym),
            Rect::new(self.x0, xm, ym, self.y1),
            Rect::new(xm, self.x1, ym, self.y1),
        ]
    }
}

/// Tensor 4x4 Gauss-Legendre over a rectangle.
pub fn gauss4x4(f: &impl Fn(f64, f64) -> f64, r: &Rect) -> f64 {
    let xm = 0.5 * (r.x0 + r.x1);
    let xh = 0.5 * r.width();
    let ym = 0.5 * (r.y0 + r.y1);
    let yh = 0.5 * r.height();
    let mut acc = 0.0;
    for (xi, wx) in G4_NODES.iter().zip(&G4_WEIGHTS) {
        for (yi, wy) in G4_NODES.iter().zip(&G4_WEIGHTS) {
            acc += wx * wy * f(xm + xh * xi, ym + yh * yi);
        }
    }
    acc * xh * yh
}

#[derive(Debug, Clone, Copy)]
pub struct ScalarQuadResult {
    pub value: f64,
    pub est_error: f64,
    pub cells: usize,
}

struct HeapCell {
    err: f64,
    seq: u64,
    rect: Rect,
    depth: u32,
    coarse: f64,
    fine: f64,
}

impl PartialEq for HeapCell {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}
impl Eq for HeapCell {}
impl PartialOrd for HeapCell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapCell {
    fn cmp(&self, other: &Self) -> Ordering {
        // max-heap on error; deterministic tiebreak on insertion sequence
        self.err
            .total_cmp(&other.err)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Adaptive 2D integration by worst-cell-first quadtree refinement with a
/// split-compare error estimate. Deterministic for fixed inputs: refinement
/// order and the final summation order do not depend on thread timing.
pub fn adaptive_2d(
    f: &(impl Fn(f64, f64) -> f64 + Sync),
    domain: Rect,
    tol: f64,
    max_depth: u32,
    max_cells: usize,
) -> ScalarQuadResult {
    let mut seq: u64 = 0;
    let make_cell = |rect: Rect, depth: u32, seq: &mut u64| {
        let coarse = gauss4x4(f, &rect);
        let fine: f64 = rect.split().iter().map(|s| gauss4x4(f, s)).sum();
        *seq += 1;
        HeapCell {
            err: (fine - coarse).abs(),
            seq: *seq,
            rect,
            depth,
            coarse,
            fine,
        }
    };

    let mut heap = BinaryHeap::new();
    let mut done: Vec<HeapCell> = Vec::new();
    // start from a 2x2 tiling so elongated domains refine sensibly
    for r in domain.split() {
        let cell = make_cell(r, 1, &mut seq);
        heap.push(cell);
    }

    loop {
        let total_err: f64 = heap.iter().map(|c| c.err).sum::<f64>()
            + done.iter().map(|c| c.err).sum::<f64>();
        if total_err <= tol || heap.is_empty() || heap.len() + done.len() >= max_cells {
            break;
        }
        let worst = heap.pop().unwrap();
        if worst.depth >= max_depth {
            done.push(worst);
            continue;
        }
        for r in worst.rect.split() {
            let cell = make_cell(r, worst.depth + 1, &mut seq);
            heap.push(cell);
        }
    }

    done.extend(heap.into_vec());
    // deterministic summation order
    done.sort_by(|a, b| {
        a.rect
            .x0
            .total_cmp(&b.rect.x0)
            .then(a.rect.y0.total_cmp(&b.rect.y0))
            .then(a.depth.cmp(&b.depth))
    });
    let mut value = 0.0;
    let mut comp = 0.0;
    let mut est_error = 0.0;
    let n = done.len();
    for cell in &done {
        // Kahan
        let y = cell.fine - comp;
        let t = value + y;
        comp = (t - value) - y;
        value = t;
        est_error += (cell.fine - cell.coarse).abs();
    }
    ScalarQuadResult {
        value,
        est_error,
        cells: n,
    }
}

/// Composite Simpson rule on a uniform nx-by-ny grid (independent cross-check
/// for the adaptive integrator). nx, ny are rounded up to even.
pub fn simpson_2d(f: &impl Fn(f64, f64) -> f64, domain: Rect, nx: usize, ny: usize) -> f64 {
    let nx = nx + nx % 2;
    let ny = ny + ny % 2;
    let hx = domain.width() / nx as f64;
    let hy = domain.height() / ny as f64;
    let wx = |i: usize| -> f64 {
        if i == 0 || i == nx {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        }
    };
    let wy = |j: usize| -> f64 {
        if j == 0 || j == ny {
            1.0
        } else if j % 2 == 1 {
            4.0
        } else {
            2.0
        }
    };
    let mut acc = 0.0;
    for i in 0..=nx {
        let x = domain.x0 + i as f64 * hx;
        let mut row = 0.0;
        for j in 0..=ny {
            let y = domain.y0 + j as f64 * hy;
            row += wy(j) * f(x, y);
        }
        acc += wx(i) * row;
    }
    acc * hx * hy / 9.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gauss_legendre_low_orders() {
        let (n2, w2) = gauss_legendre(2);
        assert_abs_diff_eq!(n2[1], 1.0 / 3f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(w2[0], 1.0, epsilon = 1e-14);
        let (n64, w64) = gauss_legendre(64);
        assert_eq!(n64.len(), 64);
        assert_abs_diff_eq!(w64.iter().sum::<f64>(), 2.0, epsilon = 1e-13);
        // integrates x^6 exactly with n >= 4
        let v = integrate_1d(|x| x.powi(6), -1.0, 1.0, 4);
        assert_abs_diff_eq!(v, 2.0 / 7.0, epsilon = 1e-14);
    }

    #[test]
    fn adaptive_2d_polynomial_exact() {
        let r = Rect::new(0.0, 2.0, -1.0, 1.0);
        let res = adaptive_2d(&|x, y| x * x * y * y + 1.0, r, 1e-12, 20, 10_000);
        // int x^2 over [0,2] = 8/3; int y^2 over [-1,1] = 2/3; area term 4
        assert_abs_diff_eq!(res.value, 8.0 / 3.0 * 2.0 / 3.0 + 4.0, epsilon = 1e-10);
    }

    #[test]
    fn adaptive_2d_handles_kinks() {
        // |x| has a kink along x = 0
        let r = Rect::new(-1.0, 1.0, 0.0, 1.0);
        let res = adaptive_2d(&|x, _| x.abs(), r, 1e-10, 30, 100_000);
        assert_abs_diff_eq!(res.value, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn adaptive_2d_deterministic() {
        let r = Rect::new(-1.0, 1.5, -0.5, 2.0);
        let f = |x: f64, y: f64| (x * y).sin() + (x - y).abs().sqrt();
        let a = adaptive_2d(&f, r, 1e-8, 25, 50_000);
        let b = adaptive_2d(&f, r, 1e-8, 25, 50_000);
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.cells, b.cells);
    }

    #[test]
    fn simpson_agrees_with_adaptive() {
        let r = Rect::new(0.0, 1.0, 0.0, 1.0);
        let f = |x: f64, y: f64| (x + 2.0 * y).exp();
        let a = adaptive_2d(&f, r, 1e-11, 20, 50_000);
        let s = simpson_2d(&f, r, 200, 200);
        assert_abs_diff_eq!(a.value, s, epsilon = 1e-8);
    }
}
