//! Small closed set of analytic field expressions used for initial data,
//! forcing and targets.

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::grid::{Grid, ScalarField};
use crate::math::{cos, exp, sqrt, tanh};

#[derive(Clone, Debug, PartialEq)]
pub enum FieldExpr {
    Constant(f64),
    /// `amplitude · exp(−|x − c|² / (2 width²))`.
    Gaussian { amplitude: f64, x0: f64, y0: f64, width: f64 },
    /// Radial front `inside + (outside − inside) · (1 + tanh((|x − c| − radius) / width)) / 2`.
    TanhFront { inside: f64, outside: f64, x0: f64, y0: f64, radius: f64, width: f64 },
    /// `amplitude · cos(kx π x / Lx) · cos(ky π y / Ly)`; satisfies the Neumann condition.
    CosineMode { amplitude: f64, kx: u32, ky: u32 },
    Sum(Vec<FieldExpr>),
    Scaled(f64, Box<FieldExpr>),
}

impl FieldExpr {
    pub fn eval(&self, x: f64, y: f64, lx: f64, ly: f64) -> f64 {
        match self {
            FieldExpr::Constant(c) => *c,
            FieldExpr::Gaussian { amplitude, x0, y0, width } => {
                let r2 = (x - x0) * (x - x0) + (y - y0) * (y - y0);
                amplitude * exp(-r2 / (2.0 * width * width))
            }
            FieldExpr::TanhFront { inside, outside, x0, y0, radius, width } => {
                let r = sqrt((x - x0) * (x - x0) + (y - y0) * (y - y0));
                inside + (outside - inside) * 0.5 * (1.0 + tanh((r - radius) / width))
            }
            FieldExpr::CosineMode { amplitude, kx, ky } => {
                let pi = core::f64::consts::PI;
                amplitude * cos(*kx as f64 * pi * x / lx) * cos(*ky as f64 * pi * y / ly)
            }
            FieldExpr::Sum(parts) => parts.iter().map(|p| p.eval(x, y, lx, ly)).sum(),
            FieldExpr::Scaled(a, e) => a * e.eval(x, y, lx, ly),
        }
    }

    pub fn sample(&self, grid: Grid) -> ScalarField {
        let (lx, ly) = (grid.lx(), grid.ly());
        ScalarField::from_fn(grid, |x, y| self.eval(x, y, lx, ly))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluates_each_form() {
        let g = FieldExpr::Gaussian { amplitude: 2.0, x0: 0.5, y0: 0.5, width: 0.1 };
        assert_eq!(g.eval(0.5, 0.5, 1.0, 1.0), 2.0);
        assert!((g.eval(0.6, 0.5, 1.0, 1.0) - 2.0 * (-0.5f64).exp()).abs() < 1e-14);
        let t = FieldExpr::TanhFront { inside: 1.0, outside: 0.0, x0: 0.0, y0: 0.0, radius: 0.3, width: 0.01 };
        assert!((t.eval(0.3, 0.0, 1.0, 1.0) - 0.5).abs() < 1e-12);
        assert!(t.eval(0.0, 0.0, 1.0, 1.0) > 0.999);
        let c = FieldExpr::CosineMode { amplitude: 1.0, kx: 1, ky: 0 };
        assert!((c.eval(2.0, 0.3, 2.0, 1.0) + 1.0).abs() < 1e-14);
        let s = FieldExpr::Sum(alloc::vec![FieldExpr::Constant(1.0), FieldExpr::Scaled(3.0, Box::new(FieldExpr::Constant(2.0)))]);
        assert_eq!(s.eval(0.0, 0.0, 1.0, 1.0), 7.0);
    }
}
