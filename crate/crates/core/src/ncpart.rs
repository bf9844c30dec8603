//! Non-crossing partitions of `{1..n}`.
//!
//! Partitions are stored in canonical form: blocks sorted by their minimum,
//! elements sorted inside each block. Enumeration walks restricted growth
//! strings in lexicographic order, so `enumerate_nc(n)` is deterministic.
//!
//! The Möbius function `μ(π, 1ₙ)` is evaluated through the Kreweras
//! complement: it factors over the blocks `W` of `K(π)` as
//! `(-1)^{|W|-1} Cat(|W|-1)`.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};

/// Largest ground set accepted by [`enumerate_nc`].
pub const MAX_ENUMERATION: usize = 14;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Partition {
    n: usize,
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    /// Builds a partition of `{1..n}` from arbitrary blocks and canonicalizes it.
    pub fn new(n: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidPartition("ground set must be nonempty".into()));
        }
        let mut seen = vec![false; n + 1];
        let mut blocks: Vec<Vec<usize>> = blocks
            .into_iter()
            .filter(|b| !b.is_empty())
            .map(|mut b| {
                b.sort_unstable();
                b
            })
            .collect();
        for b in &blocks {
            for &e in b {
                if e == 0 || e > n {
                    return Err(Error::InvalidPartition(format!("element {e} outside 1..{n}")));
                }
                if seen[e] {
                    return Err(Error::InvalidPartition(format!("element {e} repeated")));
                }
                seen[e] = true;
            }
        }
        if let Some(missing) = (1..=n).find(|&e| !seen[e]) {
            return Err(Error::InvalidPartition(format!("element {missing} not covered")));
        }
        blocks.sort_by_key(|b| b[0]);
        Ok(Partition { n, blocks })
    }

    /// Builds a partition from a restricted growth string (`labels[i]` is the
    /// block of element `i + 1`; blocks are numbered from 0 in order of first
    /// appearance).
    pub fn from_block_labels(labels: &[usize]) -> Result<Self> {
        let k = labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut blocks = vec![Vec::new(); k];
        for (i, &l) in labels.iter().enumerate() {
            blocks[l].push(i + 1);
        }
        Partition::new(labels.len(), blocks)
    }

    /// The one-block partition `1ₙ`.
    pub fn one(n: usize) -> Self {
        Partition {
            n,
            blocks: vec![(1..=n).collect()],
        }
    }

    /// The all-singletons partition `0ₙ`.
    pub fn zero(n: usize) -> Self {
        Partition {
            n,
            blocks: (1..=n).map(|i| vec![i]).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Block index of every element, 0-based in both element and block.
    pub fn block_labels(&self) -> Vec<usize> {
        let mut labels = vec![0; self.n];
        for (bi, b) in self.blocks.iter().enumerate() {
            for &e in b {
                labels[e - 1] = bi;
            }
        }
        labels
    }

    pub fn block_index(&self, block: &[usize]) -> Option<usize> {
        let mut sorted = block.to_vec();
        sorted.sort_unstable();
        self.blocks.iter().position(|b| *b == sorted)
    }

    pub fn is_noncrossing(&self) -> bool {
        // Two blocks cross iff some a < b < c < d has a, c in one and b, d in the other.
        let labels = self.block_labels();
        let mut stack: Vec<usize> = Vec::new();
        let mut last: Vec<usize> = self.blocks.iter().map(|b| *b.last().unwrap()).collect();
        for (i, &l) in labels.iter().enumerate() {
            let e = i + 1;
            match stack.iter().position(|&s| s == l) {
                Some(pos) => {
                    // every block opened after l must already be finished
                    if stack[pos + 1..].iter().any(|&s| last[s] > e) {
                        return false;
                    }
                    stack.truncate(pos + 1);
                }
                None => stack.push(l),
            }
            if last[l] == e {
                last[l] = 0;
            }
        }
        true
    }

    /// `self ≤ other` in refinement order.
    pub fn refines(&self, other: &Partition) -> bool {
        if self.n != other.n {
            return false;
        }
        let lab = other.block_labels();
        self.blocks
            .iter()
            .all(|b| b.iter().all(|&e| lab[e - 1] == lab[b[0] - 1]))
    }

    /// Relabels every element `i` to `((i - 1 + shift) mod n) + 1`.
    pub fn rotated(&self, shift: isize) -> Partition {
        let n = self.n as isize;
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                b.iter()
                    .map(|&e| ((e as isize - 1 + shift).rem_euclid(n) + 1) as usize)
                    .collect()
            })
            .collect();
        Partition::new(self.n, blocks).expect("rotation preserves validity")
    }

    /// Cyclic permutation of each block in increasing order, as a 0-based map.
    fn as_permutation(&self) -> Vec<usize> {
        let mut p = vec![0; self.n];
        for b in &self.blocks {
            for (i, &e) in b.iter().enumerate() {
                p[e - 1] = b[(i + 1) % b.len()] - 1;
            }
        }
        p
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, b) in self.blocks.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "(")?;
            for (j, e) in b.iter().enumerate() {
                if j > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{e}")?;
            }
            write!(f, ")")?;
        }
        write!(f, "}}")
    }
}

pub fn is_noncrossing(p: &Partition) -> bool {
    p.is_noncrossing()
}

pub fn catalan(n: usize) -> u64 {
    let mut c: u64 = 1;
    for k in 0..n as u64 {
        c = c * 2 * (2 * k + 1) / (k + 2);
    }
    c
}

/// Visits every non-crossing partition of `{1..n}` in lexicographic order of
/// the block-label vector.
pub fn for_each_nc<F: FnMut(&[usize])>(n: usize, mut f: F) -> Result<()> {
    if n == 0 || n > MAX_ENUMERATION {
        return Err(Error::SizeCap {
            what: "n",
            value: n,
            cap: MAX_ENUMERATION,
        });
    }
    let mut labels = Vec::with_capacity(n);
    let mut stack = Vec::with_capacity(n);
    nc_rec(n, 0, &mut labels, &mut stack, &mut f);
    Ok(())
}

fn nc_rec<F: FnMut(&[usize])>(
    n: usize,
    num_blocks: usize,
    labels: &mut Vec<usize>,
    open: &mut Vec<usize>,
    f: &mut F,
) {
    if labels.len() == n {
        f(labels);
        return;
    }
    // join an open block; blocks above it in the stack get closed
    for pos in 0..open.len() {
        let saved: Vec<usize> = open[pos + 1..].to_vec();
        let b = open[pos];
        open.truncate(pos + 1);
        labels.push(b);
        nc_rec(n, num_blocks, labels, open, f);
        labels.pop();
        open.extend(saved);
    }
    open.push(num_blocks);
    labels.push(num_blocks);
    nc_rec(n, num_blocks + 1, labels, open, f);
    labels.pop();
    open.pop();
}

pub fn enumerate_nc(n: usize) -> Result<Vec<Partition>> {
    let mut out = Vec::with_capacity(catalan(n.min(MAX_ENUMERATION)) as usize);
    for_each_nc(n, |labels| {
        out.push(Partition::from_block_labels(labels).expect("generated labels are valid"));
    })?;
    Ok(out)
}

pub fn kreweras(p: &Partition) -> Result<Partition> {
    if !p.is_noncrossing() {
        return Err(Error::Crossing);
    }
    let n = p.n;
    let perm = p.as_permutation();
    let mut inv = vec![0; n];
    for (i, &j) in perm.iter().enumerate() {
        inv[j] = i;
    }
    // K(π) = π⁻¹ ∘ γ with γ = (1 2 … n)
    let k: Vec<usize> = (0..n).map(|i| inv[(i + 1) % n]).collect();
    let mut seen = vec![false; n];
    let mut blocks = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut b = Vec::new();
        let mut i = start;
        while !seen[i] {
            seen[i] = true;
            b.push(i + 1);
            i = k[i];
        }
        blocks.push(b);
    }
    Partition::new(n, blocks)
}

/// `μ(p, 1ₙ)` in the lattice `NC(n)`.
pub fn mobius_to_one(p: &Partition) -> Result<i64> {
    let k = kreweras(p)?;
    Ok(k.blocks()
        .iter()
        .map(|w| {
            let s = w.len() - 1;
            let c = catalan(s) as i64;
            if s % 2 == 0 {
                c
            } else {
                -c
            }
        })
        .product())
}

/// `NC(n)` together with `μ(π, 1ₙ)` for each element, shared across callers.
#[derive(Debug)]
pub struct NcTable {
    pub partitions: Vec<Partition>,
    pub mobius: Vec<i64>,
}

pub fn nc_table(n: usize) -> Result<Arc<NcTable>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<NcTable>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(t) = cache.lock().unwrap().get(&n) {
        return Ok(t.clone());
    }
    let partitions = enumerate_nc(n)?;
    let mobius = partitions
        .iter()
        .map(mobius_to_one)
        .collect::<Result<Vec<_>>>()?;
    let table = Arc::new(NcTable { partitions, mobius });
    cache.lock().unwrap().insert(n, table.clone());
    Ok(table)
}
