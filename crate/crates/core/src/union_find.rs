//! Union–find that tracks unwrapped displacements to the root, so clusters
//! winding around the torus can be detected while they are merged.

/// Disjoint sets over lattice sites. `offset[i]` is the unwrapped position
/// of `i` minus that of its parent.
#[derive(Debug, Clone)]
pub struct DisplacementUnionFind {
    parent: Vec<usize>,
    offset: Vec<[i64; 2]>,
    size: Vec<usize>,
    wraps: Vec<[bool; 2]>,
}

impl DisplacementUnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            offset: vec![[0, 0]; n],
            size: vec![1; n],
            wraps: vec![[false, false]; n],
        }
    }

    /// Root of `i` and the displacement of `i` relative to it.
    pub fn find(&mut self, i: usize) -> (usize, [i64; 2]) {
        let mut root = i;
        let mut acc = [0i64, 0];
        while self.parent[root] != root {
            let o = self.offset[root];
            acc = [acc[0] + o[0], acc[1] + o[1]];
            root = self.parent[root];
        }
        // second pass: point every node on the path straight at the root
        let mut node = i;
        let mut rem = acc;
        while self.parent[node] != root && node != root {
            let next = self.parent[node];
            let o = self.offset[node];
            self.parent[node] = root;
            self.offset[node] = rem;
            rem = [rem[0] - o[0], rem[1] - o[1]];
            node = next;
        }
        (root, acc)
    }

    /// Joins `a` and `b`, where `delta` is the unwrapped displacement from
    /// `a` to `b`. A contact inside one set whose displacement disagrees with
    /// the tree marks that set as winding in the mismatched direction.
    pub fn union(&mut self, a: usize, b: usize, delta: [i64; 2]) {
        let (ra, da) = self.find(a);
        let (rb, db) = self.find(b);
        if ra == rb {
            let via_tree = [db[0] - da[0], db[1] - da[1]];
            for k in 0..2 {
                if via_tree[k] != delta[k] {
                    self.wraps[ra][k] = true;
                }
            }
            return;
        }
        // r(rb) - r(ra) = da + delta - db
        let link = [da[0] + delta[0] - db[0], da[1] + delta[1] - db[1]];
        let (big, small, off) = if self.size[ra] >= self.size[rb] {
            (ra, rb, link)
        } else {
            (rb, ra, [-link[0], -link[1]])
        };
        self.parent[small] = big;
        self.offset[small] = off;
        self.size[big] += self.size[small];
        self.wraps[big] = [
            self.wraps[big][0] || self.wraps[small][0],
            self.wraps[big][1] || self.wraps[small][1],
        ];
    }

    pub fn set_size(&mut self, i: usize) -> usize {
        let (r, _) = self.find(i);
        self.size[r]
    }

    pub fn set_wraps(&mut self, i: usize) -> [bool; 2] {
        let (r, _) = self.find(i);
        self.wraps[r]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_detects_winding() {
        // four sites on a ring of circumference 4 along x
        let mut uf = DisplacementUnionFind::new(4);
        for i in 0..3 {
            uf.union(i, i + 1, [1, 0]);
        }
        assert_eq!(uf.set_wraps(0), [false, false]);
        uf.union(3, 0, [1, 0]);
        assert_eq!(uf.set_wraps(2), [true, false]);
        assert_eq!(uf.set_size(1), 4);
    }

    #[test]
    fn consistent_loop_does_not_wrap() {
        let mut uf = DisplacementUnionFind::new(4);
        uf.union(0, 1, [1, 0]);
        uf.union(1, 2, [0, 1]);
        uf.union(2, 3, [-1, 0]);
        uf.union(3, 0, [0, -1]);
        assert_eq!(uf.set_wraps(0), [false, false]);
        let (_, d0) = uf.find(0);
        let (_, d2) = uf.find(2);
        assert_eq!([d2[0] - d0[0], d2[1] - d0[1]], [1, 1]);
    }
}
