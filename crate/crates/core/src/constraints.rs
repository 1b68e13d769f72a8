//! Per-item stock volumes proportional to historical popularity.

use crate::error::{Error, Result};

/// Maximum number of recommendation slots each item may occupy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StockVector {
    q: Vec<u64>,
    m: usize,
    l: usize,
}

impl StockVector {
    /// Stocks given directly, bypassing the popularity formula.
    pub fn from_volumes(q: Vec<u64>, m: usize, l: usize) -> Self {
        StockVector { q, m, l }
    }

    /// Every item gets `m * l`, which never binds.
    pub fn slack(n: usize, m: usize, l: usize) -> Self {
        StockVector {
            q: vec![(m * l) as u64; n],
            m,
            l,
        }
    }

    pub fn volumes(&self) -> &[u64] {
        &self.q
    }

    pub fn get(&self, j: usize) -> u64 {
        self.q[j]
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.q.iter().sum()
    }

    pub fn users(&self) -> usize {
        self.m
    }

    pub fn list_length(&self) -> usize {
        self.l
    }
}

/// `q_j = ceil(m * l * deg(v_j) / sum_k deg(v_k))`, in exact integer arithmetic.
pub fn stock_volumes(item_degrees: &[u32], m: usize, l: usize) -> Result<StockVector> {
    if l == 0 {
        return Err(Error::Constraint("list length must be at least 1".into()));
    }
    let total: u128 = item_degrees.iter().map(|&d| u128::from(d)).sum();
    if total == 0 {
        return Err(Error::Constraint("all item degrees are zero".into()));
    }
    let slots = (m as u128) * (l as u128);
    let q = item_degrees
        .iter()
        .map(|&d| {
            let num = slots * u128::from(d);
            num.div_ceil(total) as u64
        })
        .collect();
    Ok(StockVector { q, m, l })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_degrees_split_evenly() {
        let s = stock_volumes(&[3; 5], 10, 2).unwrap();
        assert_eq!(s.volumes(), &[4; 5]);
    }

    #[test]
    fn hand_cases() {
        assert_eq!(
            stock_volumes(&[1, 2, 1], 2, 1).unwrap().volumes(),
            &[1, 1, 1]
        );
        let s = stock_volumes(&[2, 1, 1], 3, 2).unwrap();
        assert_eq!(s.volumes(), &[3, 2, 2]);
        assert_eq!(s.total(), 7);
    }

    #[test]
    fn zero_degree_items_get_no_stock() {
        assert_eq!(stock_volumes(&[0, 5], 4, 3).unwrap().volumes(), &[0, 12]);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            stock_volumes(&[0, 0], 3, 2),
            Err(Error::Constraint(_))
        ));
        assert!(matches!(
            stock_volumes(&[], 3, 2),
            Err(Error::Constraint(_))
        ));
        assert!(matches!(
            stock_volumes(&[1], 3, 0),
            Err(Error::Constraint(_))
        ));
    }
}
