//! Agglomerative hierarchical clustering over a distance matrix.
//!
//! Leaves are `0..N`, the node created by merge `s` is `N + s`. At every step
//! the active pair with the smallest linkage distance is merged; equal heights
//! go to the lexicographically smallest `(min node id, max node id)`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mmd::DistanceMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    /// UPGMA
    #[default]
    Average,
    Complete,
    Single,
}

impl FromStr for Linkage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "average" => Ok(Linkage::Average),
            "complete" => Ok(Linkage::Complete),
            "single" => Ok(Linkage::Single),
            other => Err(Error::validation(format!("unknown linkage {other:?}"))),
        }
    }
}

impl fmt::Display for Linkage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Linkage::Average => "average",
            Linkage::Complete => "complete",
            Linkage::Single => "single",
        })
    }
}

/// One merge record; serialized as `[left, right, height, size]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    pub ids: Vec<String>,
    pub merges: Vec<Merge>,
}

#[derive(Serialize, Deserialize)]
struct DendrogramJson {
    ids: Vec<String>,
    merges: Vec<(usize, usize, f64, usize)>,
}

impl Dendrogram {
    pub fn n_leaves(&self) -> usize {
        self.ids.len()
    }

    pub fn to_json(&self) -> String {
        let j = DendrogramJson {
            ids: self.ids.clone(),
            merges: self
                .merges
                .iter()
                .map(|m| (m.left, m.right, m.height, m.size))
                .collect(),
        };
        serde_json::to_string(&j).expect("dendrogram serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: DendrogramJson = serde_json::from_str(text)
            .map_err(|e| Error::validation(format!("dendrogram JSON: {e}")))?;
        let d = Dendrogram {
            ids: j.ids,
            merges: j
                .merges
                .into_iter()
                .map(|(left, right, height, size)| Merge {
                    left,
                    right,
                    height,
                    size,
                })
                .collect(),
        };
        d.validate()?;
        Ok(d)
    }

    /// Structural checks: N-1 merges, each node merged once, sizes add up.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_leaves();
        if n == 0 || self.merges.len() != n - 1 {
            return Err(Error::validation(format!(
                "{} merges for {n} leaves",
                self.merges.len()
            )));
        }
        let mut sizes: Vec<usize> = vec![1; n];
        let mut used = vec![false; 2 * n - 1];
        for (s, m) in self.merges.iter().enumerate() {
            let limit = n + s;
            for node in [m.left, m.right] {
                if node >= limit || used[node] {
                    return Err(Error::validation(format!("merge {s} reuses or forward-references node {node}")));
                }
                used[node] = true;
            }
            if m.left == m.right || m.size != sizes[m.left] + sizes[m.right] {
                return Err(Error::validation(format!("merge {s} has inconsistent size")));
            }
            sizes.push(m.size);
        }
        Ok(())
    }
}

/// Builds the dendrogram for `d` with the given linkage.
pub fn agglomerate(d: &DistanceMatrix, linkage: Linkage) -> Result<Dendrogram> {
    let n = d.len();
    if n < 2 {
        return Err(Error::validation("clustering needs at least 2 items"));
    }
    // Slot `s` holds the cluster whose node id is `node[s]`. Between-cluster
    // state is the sum of member distances (average) or the extreme member
    // distance (complete/single).
    let mut link: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| d.get(i, j)).collect()).collect();
    let mut size = vec![1usize; n];
    let mut node: Vec<usize> = (0..n).collect();
    let mut active: BTreeSet<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n - 1);

    let height = |link: &Vec<Vec<f64>>, size: &Vec<usize>, a: usize, b: usize| match linkage {
        Linkage::Average => link[a][b] / (size[a] * size[b]) as f64,
        _ => link[a][b],
    };

    for step in 0..n - 1 {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for &a in &active {
            for &b in active.range(a + 1..) {
                let h = height(&link, &size, a, b);
                let (lo, hi) = if node[a] < node[b] { (node[a], node[b]) } else { (node[b], node[a]) };
                let better = match best {
                    None => true,
                    Some((bh, blo, bhi, _, _)) => h < bh || (h == bh && (lo, hi) < (blo, bhi)),
                };
                if better {
                    best = Some((h, lo, hi, a, b));
                }
            }
        }
        let (h, lo, hi, a, b) = best.expect("at least two active clusters");
        merges.push(Merge {
            left: lo,
            right: hi,
            height: h,
            size: size[a] + size[b],
        });
        // merged cluster takes slot a
        for &c in &active {
            if c == a || c == b {
                continue;
            }
            let v = match linkage {
                Linkage::Average => link[a][c] + link[b][c],
                Linkage::Complete => link[a][c].max(link[b][c]),
                Linkage::Single => link[a][c].min(link[b][c]),
            };
            link[a][c] = v;
            link[c][a] = v;
        }
        size[a] += size[b];
        node[a] = n + step;
        active.remove(&b);
    }
    Ok(Dendrogram {
        ids: d.ids().to_vec(),
        merges,
    })
}

/// Flat assignment into `k` clusters by undoing the last `k - 1` merges.
/// Cluster ids are ordered by the smallest leaf each cluster contains.
pub fn cut(dendrogram: &Dendrogram, k: usize) -> Result<Vec<usize>> {
    let n = dendrogram.n_leaves();
    if k == 0 || k > n {
        return Err(Error::validation(format!("k = {k} is outside 1..={n}")));
    }
    dendrogram.validate()?;
    // union-find over all 2n-1 nodes
    let mut parent: Vec<usize> = (0..2 * n - 1).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (s, m) in dendrogram.merges.iter().take(n - k).enumerate() {
        let new = n + s;
        let (l, r) = (find(&mut parent, m.left), find(&mut parent, m.right));
        parent[l] = new;
        parent[r] = new;
    }
    let mut root_label: Vec<Option<usize>> = vec![None; 2 * n - 1];
    let mut next = 0;
    let mut out = Vec::with_capacity(n);
    for leaf in 0..n {
        let root = find(&mut parent, leaf);
        let label = *root_label[root].get_or_insert_with(|| {
            next += 1;
            next - 1
        });
        out.push(label);
    }
    Ok(out)
}

/// `id,cluster` CSV.
pub fn assignment_to_csv(ids: &[String], assignment: &[usize]) -> String {
    let mut out = String::from("id,cluster\n");
    for (id, c) in ids.iter().zip(assignment) {
        out.push_str(&format!("{id},{c}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn dm(vals: &[f64], n: usize) -> DistanceMatrix {
        let ids = (0..n).map(|i| format!("s{i}")).collect();
        DistanceMatrix::new(ids, DMatrix::from_row_slice(n, n, vals)).unwrap()
    }

    #[test]
    fn two_points() {
        let d = agglomerate(&dm(&[0.0, 1.0, 1.0, 0.0], 2), Linkage::Average).unwrap();
        assert_eq!(
            d.merges,
            vec![Merge {
                left: 0,
                right: 1,
                height: 1.0,
                size: 2
            }]
        );
    }

    #[test]
    fn three_points_upgma() {
        let d = dm(&[0.0, 1.0, 4.0, 1.0, 0.0, 4.0, 4.0, 4.0, 0.0], 3);
        let den = agglomerate(&d, Linkage::Average).unwrap();
        assert_eq!(den.merges[0], Merge { left: 0, right: 1, height: 1.0, size: 2 });
        assert_eq!(den.merges[1], Merge { left: 2, right: 3, height: 4.0, size: 3 });
        assert_eq!(cut(&den, 2).unwrap(), vec![0, 0, 1]);
        assert_eq!(cut(&den, 1).unwrap(), vec![0, 0, 0]);
        assert_eq!(cut(&den, 3).unwrap(), vec![0, 1, 2]);
        assert!(cut(&den, 0).is_err());
        assert!(cut(&den, 4).is_err());
    }

    #[test]
    fn complete_and_single() {
        let d = dm(&[0.0, 1.0, 3.0, 1.0, 0.0, 5.0, 3.0, 5.0, 0.0], 3);
        let c = agglomerate(&d, Linkage::Complete).unwrap();
        assert_eq!(c.merges[1].height, 5.0);
        let s = agglomerate(&d, Linkage::Single).unwrap();
        assert_eq!(s.merges[1].height, 3.0);
        let a = agglomerate(&d, Linkage::Average).unwrap();
        assert_eq!(a.merges[1].height, 4.0);
    }

    #[test]
    fn ties_break_lexicographically() {
        // all distances equal: merges (0,1), then (2,3), then (4,5)
        let mut v = vec![1.0; 16];
        for i in 0..4 {
            v[i * 4 + i] = 0.0;
        }
        let den = agglomerate(&dm(&v, 4), Linkage::Average).unwrap();
        let pairs: Vec<_> = den.merges.iter().map(|m| (m.left, m.right)).collect();
        assert_eq!(pairs, vec![(0, 1), (2, 3), (4, 5)]);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let d = dm(&[0.0, 1.0, 4.0, 1.0, 0.0, 4.0, 4.0, 4.0, 0.0], 3);
        let den = agglomerate(&d, Linkage::Average).unwrap();
        let text = den.to_json();
        assert!(text.starts_with(r#"{"ids":["s0","s1","s2"],"merges":[[0,1,1.0,2],[2,3,4.0,3]]"#));
        assert_eq!(Dendrogram::from_json(&text).unwrap(), den);
        let bad = r#"{"ids":["a","b","c"],"merges":[[0,1,1.0,2],[0,3,2.0,3]]}"#;
        assert!(Dendrogram::from_json(bad).is_err());
    }

    #[test]
    fn linkage_parse() {
        assert_eq!("single".parse::<Linkage>().unwrap(), Linkage::Single);
        assert!("ward".parse::<Linkage>().is_err());
        assert_eq!(Linkage::Complete.to_string(), "complete");
    }

    #[test]
    fn too_small() {
        let d = DistanceMatrix::new(vec!["a".into()], DMatrix::zeros(1, 1)).unwrap();
        assert!(agglomerate(&d, Linkage::Average).is_err());
    }
}
