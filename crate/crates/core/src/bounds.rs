//! Closed-form bounds on `|max V_N - max V_inf|`.
//!
//! Both bounds contain the factor
//! `[(A / (S - 1) + B) (1/(1 - gS) - 1/(1 - g)) - g A / (1 - g)^2] / (S - 1)`.
//! Using `1/(1 - gS) - 1/(1 - g) = g (S - 1) / ((1 - gS)(1 - g))` it equals
//! `g B / ((1 - gS)(1 - g)) + g^2 A / ((1 - gS)(1 - g)^2)`, which is what
//! [`geometric_factor`] evaluates. The rewritten form has no cancellation and
//! is also the analytic limit at `S = 1`.

use serde::Serialize;

use crate::env::LipschitzConstants;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Theorem1Constants {
    pub s_p: f64,
    pub s_r: f64,
    pub s_g: f64,
    pub c_p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Theorem2Constants {
    pub q_p: f64,
    pub q_r: f64,
}

/// `S_P = 1 + 2 L_P + L_Q (1 + L_P)`, `S_R = M + 2 L_R + L_Q (M + L_R)`,
/// `S_G = L_G (2 + L_Q)`, `C_P = 2 + L_P`.
pub fn theorem1_constants(c: &LipschitzConstants) -> Theorem1Constants {
    Theorem1Constants {
        s_p: 1.0 + 2.0 * c.l_p + c.l_q * (1.0 + c.l_p),
        s_r: c.m + 2.0 * c.l_r + c.l_q * (c.m + c.l_r),
        s_g: c.l_g * (2.0 + c.l_q),
        c_p: 2.0 + c.l_p,
    }
}

/// `Q_P = 1 + L_P + L_Q`, `Q_R = M (1 + L_Q) + L_R`.
pub fn theorem2_constants(c: &LipschitzConstants) -> Theorem2Constants {
    Theorem2Constants {
        q_p: 1.0 + c.l_p + c.l_q,
        q_r: c.m * (1.0 + c.l_q) + c.l_r,
    }
}

fn check_common(gamma: f64, n: u64, sizes: &[(&str, usize)], scalars: &[(&str, f64)]) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::arg(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if n == 0 {
        return Err(Error::arg("N must be at least 1"));
    }
    for (name, v) in sizes {
        if *v == 0 {
            return Err(Error::arg(format!("{name} must be at least 1")));
        }
    }
    for (name, v) in scalars {
        if !v.is_finite() || *v < 0.0 {
            return Err(Error::arg(format!("{name} must be finite and non-negative, got {v}")));
        }
    }
    Ok(())
}

/// The bracketed growth factor shared by both bounds, with rate `s`,
/// per-step coefficient `b` and global-coupling coefficient `a`.
fn geometric_factor(gamma: f64, s: f64, a: f64, b: f64) -> f64 {
    let contraction = 1.0 - gamma * s;
    let one = 1.0 - gamma;
    gamma * b / (contraction * one) + gamma * gamma * a / (contraction * one * one)
}

/// General N-agent approximation bound. Requires `gamma * S_P < 1`.
#[allow(clippy::too_many_arguments)]
pub fn theorem1_bound(
    k: &Theorem1Constants,
    gamma: f64,
    n: u64,
    x_size: usize,
    u_size: usize,
    m: f64,
    l_r: f64,
    l_g: f64,
) -> Result<f64> {
    check_common(
        gamma,
        n,
        &[("|X|", x_size), ("|U|", u_size)],
        &[("M", m), ("L_R", l_r), ("L_G", l_g)],
    )?;
    if !(k.s_p >= 1.0) {
        return Err(Error::arg(format!("S_P must be at least 1, got {}", k.s_p)));
    }
    let g_sp = gamma * k.s_p;
    if g_sp >= 1.0 {
        return Err(Error::BoundValidity {
            condition: "gamma * S_P < 1",
            value: g_sp,
        });
    }
    let root_n = (n as f64).sqrt();
    let u = u_size as f64;
    let first = (m + l_r * u.sqrt()) / ((1.0 - gamma) * root_n);
    let second = (u / n as f64).sqrt() * m * l_g * gamma / (1.0 - gamma).powi(2);
    let third = k.c_p
        * geometric_factor(gamma, k.s_p, m * k.s_g, k.s_r)
        * ((x_size as f64).sqrt() + u.sqrt())
        / root_n;
    Ok(first + second + third)
}

/// Action-free approximation bound, for models whose reward and kernels ignore the action
/// distribution. Requires `gamma * Q_P < 1`.
pub fn theorem2_bound(k: &Theorem2Constants, gamma: f64, n: u64, x_size: usize, m: f64, l_g: f64) -> Result<f64> {
    check_common(gamma, n, &[("|X|", x_size)], &[("M", m), ("L_G", l_g)])?;
    if !(k.q_p >= 1.0) {
        return Err(Error::arg(format!("Q_P must be at least 1, got {}", k.q_p)));
    }
    let g_qp = gamma * k.q_p;
    if g_qp >= 1.0 {
        return Err(Error::BoundValidity {
            condition: "gamma * Q_P < 1",
            value: g_qp,
        });
    }
    let root_n = (n as f64).sqrt();
    let first = m / ((1.0 - gamma) * root_n);
    let second = (x_size as f64).sqrt() / root_n * 2.0 * geometric_factor(gamma, k.q_p, m * l_g, k.q_r);
    Ok(first + second)
}
