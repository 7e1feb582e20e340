//! Expected half-width of the 95% CI for the primary endpoint,
//! `X = 1.96 · sqrt(p (1 - p) / N)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interchange::Z_95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfWidthResult {
    pub n: u64,
    pub p: f64,
    /// Half-width as a proportion.
    pub x: f64,
}

pub fn ci_halfwidth(p: f64, n: u64) -> Result<HalfWidthResult> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("expected proportion must lie in (0, 1), got {p}")));
    }
    if n == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    Ok(HalfWidthResult { n, p, x: Z_95 * (p * (1.0 - p) / n as f64).sqrt() })
}

/// Cross-product of sample sizes (rows) and proportions (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfWidthTable {
    pub p_values: Vec<f64>,
    pub n_values: Vec<u64>,
    /// `cells[row][col]` for `n_values[row]`, `p_values[col]`.
    pub cells: Vec<Vec<HalfWidthResult>>,
}

pub fn halfwidth_table(p_values: &[f64], n_values: &[u64]) -> Result<HalfWidthTable> {
    if p_values.is_empty() {
        return Err(Error::EmptyInput("proportion grid"));
    }
    if n_values.is_empty() {
        return Err(Error::EmptyInput("sample-size grid"));
    }
    let cells = n_values
        .iter()
        .map(|&n| p_values.iter().map(|&p| ci_halfwidth(p, n)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(HalfWidthTable { p_values: p_values.to_vec(), n_values: n_values.to_vec(), cells })
}

impl HalfWidthTable {
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| N |");
        for p in &self.p_values {
            out.push_str(&format!(" p = {:.0}% |", p * 100.0));
        }
        out.push_str("\n|---|");
        out.push_str(&"---|".repeat(self.p_values.len()));
        out.push('\n');
        for (n, row) in self.n_values.iter().zip(&self.cells) {
            out.push_str(&format!("| {n} |"));
            for c in row {
                out.push_str(&format!(" ±{:.2}% |", c.x * 100.0));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,p,halfwidth\n");
        for row in &self.cells {
            for c in row {
                out.push_str(&format!("{},{},{:.6}\n", c.n, c.p, c.x));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert!((ci_halfwidth(0.70, 476).unwrap().x - 0.0412).abs() < 5e-5);
        assert!((ci_halfwidth(0.80, 391).unwrap().x - 0.0396).abs() < 5e-5);
        assert!(ci_halfwidth(0.0, 10).is_err());
        assert!(ci_halfwidth(0.5, 0).is_err());
        assert!(ci_halfwidth(0.5, 1_000_000_000).unwrap().x < 1e-4);
    }

    #[test]
    fn table_shape() {
        let t = halfwidth_table(&[0.70, 0.75, 0.80], &[476, 1143, 391]).unwrap();
        assert_eq!(t.cells.len(), 3);
        assert_eq!(t.cells[1][2], ci_halfwidth(0.80, 1143).unwrap());
        assert!(t.to_markdown().contains("±4.12%"));
        let single = halfwidth_table(&[0.7], &[476]).unwrap();
        assert_eq!(single.cells[0][0], ci_halfwidth(0.7, 476).unwrap());
        assert!(halfwidth_table(&[], &[476]).is_err());
    }

    proptest! {
        #[test]
        fn scaling_symmetry_and_maximum(p in 0.01f64..0.99, n in 1u64..100_000) {
            let x = ci_halfwidth(p, n).unwrap().x;
            let x4 = ci_halfwidth(p, 4 * n).unwrap().x;
            prop_assert!((x4 - x / 2.0).abs() <= 1e-15 * x);
            let mirrored = ci_halfwidth(1.0 - p, n).unwrap().x;
            prop_assert!((x - mirrored).abs() <= 1e-12 * x);
            prop_assert!(x <= ci_halfwidth(0.5, n).unwrap().x);
        }
    }
}
