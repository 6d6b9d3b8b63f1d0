use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub params: Vec<usize>,
}

/// Ordered parameter blocks; the first `p1` are updated by PMMH, the rest by
/// particle Gibbs. Parameters listed in `fixed` are never updated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockingPlan {
    pub blocks: Vec<Block>,
    pub p1: usize,
    pub fixed: Vec<usize>,
}

impl BlockingPlan {
    pub fn new(blocks: Vec<Block>, p1: usize, fixed: Vec<usize>, n_params: usize) -> Result<Self> {
        if p1 > blocks.len() {
            return Err(Error::config(
                "blocking",
                format!("p1 = {p1} exceeds {} blocks", blocks.len()),
            ));
        }
        let mut seen = vec![false; n_params];
        for k in blocks
            .iter()
            .flat_map(|b| b.params.iter())
            .chain(fixed.iter())
        {
            if *k >= n_params {
                return Err(Error::config(
                    "blocking",
                    format!("parameter index {k} out of range"),
                ));
            }
            if seen[*k] {
                return Err(Error::config(
                    "blocking",
                    format!("parameter index {k} appears twice"),
                ));
            }
            seen[*k] = true;
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(Error::config(
                "blocking",
                format!("parameter index {k} is not assigned"),
            ));
        }
        if let Some(b) = blocks.iter().find(|b| b.params.is_empty()) {
            return Err(Error::config(
                "blocking",
                format!("block `{}` is empty", b.name),
            ));
        }
        Ok(BlockingPlan { blocks, p1, fixed })
    }

    /// Builds a plan from parameter names. Anything not named in a block is fixed.
    pub fn from_names(names: &[String], pmmh: &[&[&str]], pg: &[&[&str]]) -> Result<Self> {
        let index = |s: &str| {
            names
                .iter()
                .position(|n| n == s)
                .ok_or_else(|| Error::config("blocking", format!("unknown parameter `{s}`")))
        };
        let mut blocks = Vec::new();
        for group in pmmh.iter().chain(pg.iter()) {
            let params = group.iter().map(|s| index(s)).collect::<Result<Vec<_>>>()?;
            blocks.push(Block {
                name: group.join("+"),
                params,
            });
        }
        let used: Vec<usize> = blocks.iter().flat_map(|b| b.params.clone()).collect();
        let fixed = (0..names.len()).filter(|k| !used.contains(k)).collect();
        BlockingPlan::new(blocks, pmmh.len(), fixed, names.len())
    }

    pub fn is_pmmh(&self, b: usize) -> bool {
        b < self.p1
    }

    /// Free parameters in block order; this is the draw-file column order.
    pub fn param_order(&self) -> Vec<usize> {
        self.blocks
            .iter()
            .flat_map(|b| b.params.iter().copied())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names() -> Vec<String> {
        ["mu", "phi", "tau2", "rho"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    #[test]
    fn partition_checks() {
        let b = |n: &str, p: Vec<usize>| Block {
            name: n.into(),
            params: p,
        };
        assert!(
            BlockingPlan::new(vec![b("a", vec![0, 1]), b("b", vec![2, 3])], 1, vec![], 4).is_ok()
        );
        assert!(
            BlockingPlan::new(vec![b("a", vec![0, 1]), b("b", vec![1, 3])], 1, vec![2], 4).is_err()
        );
        assert!(BlockingPlan::new(vec![b("a", vec![0, 1])], 1, vec![], 4).is_err());
        assert!(BlockingPlan::new(vec![b("a", vec![0, 1, 2, 3])], 2, vec![], 4).is_err());
    }

    #[test]
    fn from_names_fixes_the_rest() {
        let p = BlockingPlan::from_names(&names(), &[&["tau2"]], &[&["phi"]]).unwrap();
        assert_eq!(p.fixed, vec![0, 3]);
        assert_eq!(p.param_order(), vec![2, 1]);
        assert!(p.is_pmmh(0) && !p.is_pmmh(1));
        assert!(BlockingPlan::from_names(&names(), &[&["sigma"]], &[]).is_err());
    }
}
