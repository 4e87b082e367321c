//! Discrete Laplace solve on an arbitrary set of unknown pixels of a grid.
//!
//! Known pixels act as Dirichlet data; the grid border is a natural (Neumann)
//! boundary, so each unknown is driven toward the mean of its in-grid
//! 4-neighbors.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Residual below which the solve stops.
pub const LAPLACE_TOL: f64 = 1e-4;

const MAX_SWEEPS: usize = 200_000;

pub(crate) struct LaplaceSystem {
    unknowns: Vec<usize>,
    neighbors: Vec<[usize; 4]>,
    degree: Vec<u8>,
    omega: f64,
    /// Nearest known pixel for every unknown (multi-source BFS), used as the
    /// starting guess.
    seed: Vec<usize>,
}

impl LaplaceSystem {
    pub(crate) fn new(width: usize, height: usize, unknown: &[bool]) -> Result<Self> {
        debug_assert_eq!(unknown.len(), width * height);
        if unknown.iter().all(|u| *u) {
            return Err(Error::NoBoundary);
        }
        let mut unknowns = Vec::new();
        let mut neighbors = Vec::new();
        let mut degree = Vec::new();
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for (i, _) in unknown.iter().enumerate().filter(|(_, u)| **u) {
            let (x, y) = (i % width, i / width);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            let mut nb = [0usize; 4];
            let mut d = 0u8;
            if x > 0 {
                nb[d as usize] = i - 1;
                d += 1;
            }
            if x + 1 < width {
                nb[d as usize] = i + 1;
                d += 1;
            }
            if y > 0 {
                nb[d as usize] = i - width;
                d += 1;
            }
            if y + 1 < height {
                nb[d as usize] = i + width;
                d += 1;
            }
            unknowns.push(i);
            neighbors.push(nb);
            degree.push(d);
        }

        let mut seed = vec![usize::MAX; width * height];
        let mut queue = VecDeque::new();
        for (i, u) in unknown.iter().enumerate() {
            if !*u {
                seed[i] = i;
                queue.push_back(i);
            }
        }
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % width, i / width);
            let mut visit = |j: usize| {
                if seed[j] == usize::MAX {
                    seed[j] = seed[i];
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < width {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - width);
            }
            if y + 1 < height {
                visit(i + width);
            }
        }
        let seed = unknowns.iter().map(|i| seed[*i]).collect();

        let extent = if unknowns.is_empty() {
            1
        } else {
            (x1 - x0).max(y1 - y0) + 2
        };
        let omega = 2.0 / (1.0 + (std::f64::consts::PI / extent as f64).sin());
        Ok(Self {
            unknowns,
            neighbors,
            degree,
            omega: omega.min(1.95),
            seed,
        })
    }

    /// Solves in place; `values` carries the Dirichlet data on known pixels.
    pub(crate) fn solve(&self, values: &mut [f64], tol: f64) -> Result<usize> {
        for (k, i) in self.unknowns.iter().enumerate() {
            values[*i] = values[self.seed[k]];
        }
        for sweep in 0..MAX_SWEEPS {
            let mut max_res: f64 = 0.0;
            for (k, i) in self.unknowns.iter().enumerate() {
                let d = self.degree[k] as usize;
                let s: f64 = self.neighbors[k][..d].iter().map(|j| values[*j]).sum();
                let r = s / d as f64 - values[*i];
                max_res = max_res.max(r.abs());
                values[*i] += self.omega * r;
            }
            if max_res < tol {
                return Ok(sweep + 1);
            }
        }
        Err(Error::Numerical("Laplace solve did not converge".into()))
    }

    pub(crate) fn is_trivial(&self) -> bool {
        self.unknowns.is_empty()
    }
}

/// Fills the unknown pixels of one scalar plane with the harmonic interpolant.
pub fn harmonic_fill_plane(values: &mut [f64], width: usize, height: usize, unknown: &[bool]) -> Result<()> {
    let sys = LaplaceSystem::new(width, height, unknown)?;
    if !sys.is_trivial() {
        sys.solve(values, LAPLACE_TOL)?;
    }
    Ok(())
}
