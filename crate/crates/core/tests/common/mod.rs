//! Independent oracles used by the integration and acceptance tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, Vector2, Vector4};

/// Which parts of the motion a stopping time counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clock {
    /// Time spent moving up only (the compound Poisson clock).
    Up,
    /// Real time.
    Real,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Origin,
    Level,
}

/// Backward equations for the exit problem of the two-state motion on
/// `[0, level]`, solved exactly by matrix exponentials with multiple
/// shooting so that no segment amplifies round-off.
///
/// With `a(x)` (`b(x)`) the value of `E[exp(omega T) 1{exit at target}]`
/// from position `x` moving up (down):
///   `a' = lambda (a - b) - omega_up a`,  `b' = mu (a - b) + omega_down b`,
/// and the omega-derivatives `aw`, `bw` carry the first moments.
pub struct ExitOde {
    m: Matrix4<f64>,
    step: f64,
    nodes: Vec<Vector4<f64>>,
    level: f64,
}

impl ExitOde {
    pub fn new(lambda: f64, mu: f64, level: f64, omega: f64, clock: Clock, target: Target) -> Self {
        let (wu, wd, cu, cd) = match clock {
            Clock::Up => (omega, 0.0, 1.0, 0.0),
            Clock::Real => (omega, omega, 1.0, 1.0),
        };
        #[rustfmt::skip]
        let m = Matrix4::new(
            lambda - wu, -lambda,   0.0,         0.0,
            mu,          -mu + wd,  0.0,         0.0,
            -cu,         0.0,       lambda - wu, -lambda,
            0.0,         cd,        mu,          -mu + wd,
        );
        let (target_a, b0) = match target {
            Target::Level => (1.0, 0.0),
            Target::Origin => (0.0, 1.0),
        };
        let norm = m.abs().row_sum().max();
        let segments = ((level * norm).ceil() as usize).clamp(1, 400);
        let step = level / segments as f64;
        let e = (m * step).exp();
        let n = 4 * (segments + 1);
        let mut sys = DMatrix::<f64>::zeros(n, n);
        let mut rhs = DVector::<f64>::zeros(n);
        for i in 0..segments {
            for r in 0..4 {
                let row = 4 * i + r;
                sys[(row, 4 * (i + 1) + r)] = 1.0;
                for c in 0..4 {
                    sys[(row, 4 * i + c)] = -e[(r, c)];
                }
            }
        }
        let base = 4 * segments;
        let last = 4 * segments;
        sys[(base, 1)] = 1.0;
        rhs[base] = b0;
        sys[(base + 1, 3)] = 1.0;
        sys[(base + 2, last)] = 1.0;
        rhs[base + 2] = target_a;
        sys[(base + 3, last + 2)] = 1.0;
        let sol = sys.lu().solve(&rhs).expect("regular boundary problem");
        let nodes = (0..=segments)
            .map(|i| Vector4::new(sol[4 * i], sol[4 * i + 1], sol[4 * i + 2], sol[4 * i + 3]))
            .collect();
        ExitOde {
            m,
            step,
            nodes,
            level,
        }
    }

    fn state(&self, x: f64) -> Vector4<f64> {
        let i = ((x / self.step).floor() as usize).min(self.nodes.len() - 1);
        let dx = x - i as f64 * self.step;
        if dx == 0.0 {
            self.nodes[i]
        } else {
            (self.m * dx).exp() * self.nodes[i]
        }
    }

    /// Transform (or probability at omega = 0) from the origin.
    pub fn from_origin(&self) -> f64 {
        self.nodes[0][0]
    }

    pub fn mean_from_origin(&self) -> f64 {
        self.nodes[0][2]
    }

    pub fn from_level(&self) -> f64 {
        self.state(self.level)[1]
    }

    pub fn mean_from_level(&self) -> f64 {
        self.state(self.level)[3]
    }

    /// Moving up from `x` (a level-start phase after a descent of `level - x`).
    pub fn moving_up_at(&self, x: f64) -> (f64, f64) {
        let z = self.state(x);
        (z[0], z[2])
    }
}

const GK_NODES: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];

const GK_WEIGHTS: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

const GAUSS_WEIGHTS: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = GK_WEIGHTS[7] * fc;
    let mut gauss = GAUSS_WEIGHTS[3] * fc;
    for i in 0..7 {
        let dx = h * GK_NODES[i];
        let s = f(c - dx) + f(c + dx);
        kronrod += GK_WEIGHTS[i] * s;
        if i % 2 == 1 {
            gauss += GAUSS_WEIGHTS[i / 2] * s;
        }
    }
    (kronrod * h, (kronrod - gauss).abs() * h)
}

/// Adaptive Gauss-Kronrod (7/15) quadrature.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (value, err) = gk15(f, a, b);
        if err <= tol || depth == 0 {
            return value;
        }
        let m = 0.5 * (a + b);
        recurse(f, a, m, 0.5 * tol, depth - 1) + recurse(f, m, b, 0.5 * tol, depth - 1)
    }
    recurse(&f, a, b, tol, 30)
}

/// Mean absorption time from the renewal equations
/// `A_u = L_u + (1 - alpha) sum_v P_uv A_v`.
pub fn absorption_time_linear_solve(p: [[f64; 2]; 2], l1: f64, l1_star: f64, alpha: f64) -> f64 {
    let b = 1.0 - alpha;
    let m = Matrix2::new(
        1.0 - b * p[0][0],
        -b * p[0][1],
        -b * p[1][0],
        1.0 - b * p[1][1],
    );
    let sol = m.lu().solve(&Vector2::new(l1, l1_star)).expect("regular system");
    sol[0]
}

/// `P^j` by nalgebra matrix products.
pub fn naive_power(p: [[f64; 2]; 2], j: u32) -> Matrix2<f64> {
    let m = Matrix2::new(p[0][0], p[0][1], p[1][0], p[1][1]);
    (0..j).fold(Matrix2::identity(), |acc, _| acc * m)
}
