//! Plot data for Taylor polynomials of elementary functions about 0.

use std::f64::consts::PI;

use clap::ValueEnum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Function {
    Sin,
    Cos,
    Exp,
}

impl Function {
    pub fn name(self) -> &'static str {
        match self {
            Function::Sin => "sin",
            Function::Cos => "cos",
            Function::Exp => "exp",
        }
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            Function::Sin => x.sin(),
            Function::Cos => x.cos(),
            Function::Exp => x.exp(),
        }
    }

    /// k-th derivative at 0.
    fn derivative_at_zero(self, k: u32) -> f64 {
        match self {
            Function::Sin => [0.0, 1.0, 0.0, -1.0][k as usize % 4],
            Function::Cos => [1.0, 0.0, -1.0, 0.0][k as usize % 4],
            Function::Exp => 1.0,
        }
    }

    /// Degree-`degree` Taylor polynomial at x, by Horner's rule.
    pub fn taylor(self, degree: u32, x: f64) -> f64 {
        (0..=degree).rev().fold(0.0, |acc, k| {
            acc * x / f64::from(k + 1) + self.derivative_at_zero(k)
        })
    }
}

/// Parses `a:b`, where each end is a number or a multiple of pi such as
/// `-pi`, `2pi`, `pi/2`.
pub fn parse_range(text: &str) -> Result<(f64, f64), String> {
    let (a, b) = text.split_once(':').ok_or_else(|| format!("range '{text}' must look like a:b"))?;
    Ok((parse_endpoint(a)?, parse_endpoint(b)?))
}

fn parse_endpoint(text: &str) -> Result<f64, String> {
    let t = text.trim();
    let bad = || format!("cannot read '{text}' as a number or multiple of pi");
    let (sign, body) = match t.strip_prefix('-') {
        Some(rest) => (-1.0, rest),
        None => (1.0, t.strip_prefix('+').unwrap_or(t)),
    };
    let Some(pos) = body.find("pi") else {
        return t.parse::<f64>().map_err(|_| bad());
    };
    let factor = match &body[..pos] {
        "" => 1.0,
        s => s.trim_end_matches('*').parse::<f64>().map_err(|_| bad())?,
    };
    let divisor = match &body[pos + 2..] {
        "" => 1.0,
        s => s.strip_prefix('/').ok_or_else(bad)?.parse::<f64>().map_err(|_| bad())?,
    };
    Ok(sign * factor * PI / divisor)
}

/// `points` evenly spaced abscissae from a to b inclusive.
pub fn grid(a: f64, b: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![a],
        _ => {
            let step = (b - a) / (points - 1) as f64;
            (0..points).map(|i| if i + 1 == points { b } else { a + step * i as f64 }).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sine_taylor_polynomials() {
        let x = 0.3f64;
        assert_eq!(Function::Sin.taylor(1, x), x);
        assert!((Function::Sin.taylor(3, x) - (x - x.powi(3) / 6.0)).abs() < 1e-16);
        assert!((Function::Sin.taylor(5, x) - (x - x.powi(3) / 6.0 + x.powi(5) / 120.0)).abs() < 1e-16);
        assert!((Function::Exp.taylor(20, 1.0) - std::f64::consts::E).abs() < 1e-15);
    }

    #[test]
    fn ranges() {
        assert_eq!(parse_range("-pi:pi").unwrap(), (-PI, PI));
        assert_eq!(parse_range("0:0").unwrap(), (0.0, 0.0));
        assert_eq!(parse_range("pi/2:2pi").unwrap(), (PI / 2.0, 2.0 * PI));
        assert!(parse_range("1..2").is_err());
        assert!(parse_range("0:tau").is_err());
    }

    #[test]
    fn grid_hits_both_ends() {
        let g = grid(-PI, PI, 200);
        assert_eq!(g.len(), 200);
        assert_eq!((g[0], g[199]), (-PI, PI));
        assert_eq!(grid(0.0, 1.0, 1), [0.0]);
    }
}
