//! State spaces and variable orderings.

use num_bigint::BigUint;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Per-variable category counts. Variable `i` takes values `0..cards[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StateSpace {
    cards: Vec<usize>,
}

impl StateSpace {
    pub fn new(cards: Vec<usize>) -> Result<Self> {
        if cards.is_empty() {
            return Err(Error::InvalidSpace("at least one variable is required".into()));
        }
        if let Some((i, &d)) = cards.iter().enumerate().find(|(_, &d)| d < 2) {
            return Err(Error::InvalidSpace(format!("variable {i} has {d} categories; at least 2 are required")));
        }
        Ok(StateSpace { cards })
    }

    /// Binary space on `p` variables.
    pub fn binary(p: usize) -> Result<Self> {
        Self::new(vec![2; p])
    }

    pub fn num_vars(&self) -> usize {
        self.cards.len()
    }

    pub fn card(&self, var: usize) -> usize {
        self.cards[var]
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    /// Size of the joint outcome space as an exact integer.
    pub fn joint_size(&self) -> BigUint {
        self.cards.iter().fold(BigUint::from(1u32), |acc, &d| acc * BigUint::from(d))
    }

    /// Size of the joint outcome space, or `None` if it does not fit in a `u64`.
    pub fn joint_size_u64(&self) -> Option<u64> {
        self.cards.iter().try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
    }
}

/// A total ordering of the variables: `perm[k]` is the variable at position `k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Order {
    perm: Vec<usize>,
    pos: Vec<usize>,
}

impl Order {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let p = perm.len();
        let mut pos = vec![usize::MAX; p];
        for (k, &v) in perm.iter().enumerate() {
            if v >= p {
                return Err(Error::InvalidOrder(format!("variable {v} out of range for p = {p}")));
            }
            if pos[v] != usize::MAX {
                return Err(Error::InvalidOrder(format!("variable {v} appears twice")));
            }
            pos[v] = k;
        }
        Ok(Order { perm, pos })
    }

    pub fn identity(p: usize) -> Self {
        Order { perm: (0..p).collect(), pos: (0..p).collect() }
    }

    pub fn random<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Self {
        let mut perm: Vec<usize> = (0..p).collect();
        perm.shuffle(rng);
        Order::new(perm).expect("shuffled identity is a permutation")
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.perm
    }

    /// Variable at order position `k`.
    pub fn var_at(&self, k: usize) -> usize {
        self.perm[k]
    }

    /// Order position of variable `v`.
    pub fn position(&self, v: usize) -> usize {
        self.pos[v]
    }

    /// Variables strictly before position `k`.
    pub fn predecessors(&self, k: usize) -> &[usize] {
        &self.perm[..k]
    }

    /// Moves the variable at position `from` to position `to`, shifting the rest.
    pub fn relocate(&self, from: usize, to: usize) -> Order {
        let mut perm = self.perm.clone();
        let v = perm.remove(from);
        perm.insert(to, v);
        Order::new(perm).expect("relocation preserves the permutation")
    }

    /// All `p!` orders in lexicographic order. Intended for small `p`.
    pub fn all(p: usize) -> Vec<Order> {
        fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Order>) {
            if prefix.len() == used.len() {
                out.push(Order::new(prefix.clone()).unwrap());
                return;
            }
            for v in 0..used.len() {
                if !used[v] {
                    used[v] = true;
                    prefix.push(v);
                    rec(prefix, used, out);
                    prefix.pop();
                    used[v] = false;
                }
            }
        }
        let mut out = Vec::new();
        rec(&mut Vec::with_capacity(p), &mut vec![false; p], &mut out);
        out
    }
}

impl std::fmt::Display for Order {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.perm.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_spaces() {
        assert!(StateSpace::new(vec![]).is_err());
        assert!(StateSpace::new(vec![2, 1]).is_err());
        assert!(StateSpace::new(vec![2, 3]).is_ok());
    }

    #[test]
    fn joint_size_is_exact() {
        let s = StateSpace::new(vec![4; 40]).unwrap();
        assert_eq!(s.joint_size(), BigUint::from(2u32).pow(80));
        assert_eq!(s.joint_size_u64(), None);
        assert_eq!(StateSpace::new(vec![2, 3, 4]).unwrap().joint_size_u64(), Some(24));
    }

    #[test]
    fn order_validation() {
        assert!(Order::new(vec![1, 0, 2]).is_ok());
        assert!(Order::new(vec![1, 1, 2]).is_err());
        assert!(Order::new(vec![0, 3, 1]).is_err());
    }

    #[test]
    fn relocate_moves_one_variable() {
        let o = Order::new(vec![3, 1, 0, 2]).unwrap();
        assert_eq!(o.relocate(0, 3).as_slice(), &[1, 0, 2, 3]);
        assert_eq!(o.relocate(2, 0).as_slice(), &[0, 3, 1, 2]);
        assert_eq!(o.relocate(1, 1), o);
        assert_eq!(o.position(2), 3);
    }

    #[test]
    fn all_orders() {
        assert_eq!(Order::all(4).len(), 24);
        assert_eq!(Order::all(1).len(), 1);
    }
}
