//! Boykov-Kolmogorov augmenting-path max-flow on an implicit 6-connected grid.
//!
//! Arcs are addressed by `(node, direction)`; direction `d` and `d ^ 1` are
//! opposite (`+x, -x, +y, -y, +z, -z`). Terminal arcs are folded into a single
//! signed residual per node: positive means residual capacity from the source,
//! negative means residual capacity to the sink.

use std::collections::VecDeque;

use super::GridGraph;

const TERMINAL: u8 = 6;
const ORPHAN: u8 = 7;
const NO_PARENT: u8 = 8;

const FREE: u8 = 0;
const SOURCE: u8 = 1;
const SINK: u8 = 2;

pub(super) struct Solution {
    pub flow: u64,
    /// 1 where the node is reachable from the source in the final residual graph.
    pub source_side: Vec<u8>,
}

pub(super) fn solve(g: &GridGraph) -> Solution {
    let mut bk = Bk::new(g);
    bk.run();
    let source_side = bk.source_reachable();
    Solution {
        flow: bk.flow,
        source_side,
    }
}

struct Bk {
    offsets: [isize; 6],
    valid: Vec<u8>,
    res: Vec<[u64; 6]>,
    tr: Vec<i64>,
    tree: Vec<u8>,
    parent: Vec<u8>,
    ts: Vec<u64>,
    dist: Vec<u64>,
    queued: Vec<bool>,
    active: VecDeque<u32>,
    orphans: VecDeque<u32>,
    time: u64,
    flow: u64,
}

impl Bk {
    #[allow(clippy::needless_range_loop)]
    fn new(g: &GridGraph) -> Self {
        let d = g.dims();
        let n = d.len();
        let (nx, sl) = (d.nx as isize, d.slice_len() as isize);
        let mut valid = vec![0u8; n];
        let mut res = vec![[0u64; 6]; n];
        for i in 0..n {
            let (x, y, z) = d.coords(i);
            let mut m = 0u8;
            if x + 1 < d.nx {
                m |= 1 << 0;
            }
            if x > 0 {
                m |= 1 << 1;
            }
            if y + 1 < d.ny {
                m |= 1 << 2;
            }
            if y > 0 {
                m |= 1 << 3;
            }
            if z + 1 < d.nz {
                m |= 1 << 4;
            }
            if z > 0 {
                m |= 1 << 5;
            }
            valid[i] = m;
        }
        let step = [1usize, d.nx, d.slice_len()];
        for axis in 0..3 {
            for (i, &c) in g.neighbor_caps(axis).iter().enumerate() {
                if c > 0 && valid[i] >> (2 * axis) & 1 == 1 {
                    res[i][2 * axis] = c;
                    res[i + step[axis]][2 * axis + 1] = c;
                }
            }
        }

        let mut bk = Bk {
            offsets: [1, -1, nx, -nx, sl, -sl],
            valid,
            res,
            tr: vec![0; n],
            tree: vec![FREE; n],
            parent: vec![NO_PARENT; n],
            ts: vec![0; n],
            dist: vec![0; n],
            queued: vec![false; n],
            active: VecDeque::new(),
            orphans: VecDeque::new(),
            time: 0,
            flow: 0,
        };
        for i in 0..n {
            let (s, t) = (g.source_caps()[i], g.sink_caps()[i]);
            bk.flow = bk.flow.saturating_add(s.min(t));
            let r = s as i64 - t as i64;
            bk.tr[i] = r;
            if r != 0 {
                bk.tree[i] = if r > 0 { SOURCE } else { SINK };
                bk.parent[i] = TERMINAL;
                bk.dist[i] = 1;
                bk.activate(i);
            }
        }
        bk
    }

    #[inline]
    fn nb(&self, a: usize, d: usize) -> usize {
        (a as isize + self.offsets[d]) as usize
    }

    #[inline]
    fn has(&self, a: usize, d: usize) -> bool {
        self.valid[a] >> d & 1 == 1
    }

    fn activate(&mut self, a: usize) {
        if !self.queued[a] {
            self.queued[a] = true;
            self.active.push_back(a as u32);
        }
    }

    fn next_active(&mut self) -> Option<usize> {
        while let Some(a) = self.active.pop_front() {
            let a = a as usize;
            self.queued[a] = false;
            if self.tree[a] != FREE {
                return Some(a);
            }
        }
        None
    }

    fn run(&mut self) {
        let mut current: Option<usize> = None;
        loop {
            let a = match current.filter(|&a| self.tree[a] != FREE) {
                Some(a) => a,
                None => match self.next_active() {
                    Some(a) => a,
                    None => break,
                },
            };
            current = None;
            let hit = self.grow(a);
            self.time += 1;
            if let Some((p, d)) = hit {
                // Keep scanning the same node: it may still touch the other tree.
                current = Some(a);
                self.augment(p, d);
                self.adopt();
            }
        }
    }

    /// Expands the tree containing `a`. Returns the bridging arc `(p, d)` with `p`
    /// in the source tree and `nb(p, d)` in the sink tree, if one is found.
    fn grow(&mut self, a: usize) -> Option<(usize, usize)> {
        let t = self.tree[a];
        for d in 0..6 {
            if !self.has(a, d) {
                continue;
            }
            let b = self.nb(a, d);
            let cap = if t == SOURCE {
                self.res[a][d]
            } else {
                self.res[b][d ^ 1]
            };
            if cap == 0 {
                continue;
            }
            let tb = self.tree[b];
            if tb == FREE {
                self.tree[b] = t;
                self.parent[b] = (d ^ 1) as u8;
                self.ts[b] = self.ts[a];
                self.dist[b] = self.dist[a] + 1;
                self.activate(b);
            } else if tb != t {
                return Some(if t == SOURCE { (a, d) } else { (b, d ^ 1) });
            } else if self.ts[b] <= self.ts[a] && self.dist[b] > self.dist[a] {
                self.parent[b] = (d ^ 1) as u8;
                self.ts[b] = self.ts[a];
                self.dist[b] = self.dist[a] + 1;
            }
        }
        None
    }

    fn orphan_front(&mut self, x: usize) {
        self.parent[x] = ORPHAN;
        self.orphans.push_front(x as u32);
    }

    fn orphan_rear(&mut self, x: usize) {
        self.parent[x] = ORPHAN;
        self.orphans.push_back(x as u32);
    }

    fn augment(&mut self, p: usize, d: usize) {
        let q = self.nb(p, d);
        let mut f = self.res[p][d];

        let mut x = p;
        while self.parent[x] != TERMINAL {
            let pd = self.parent[x] as usize;
            let y = self.nb(x, pd);
            f = f.min(self.res[y][pd ^ 1]);
            x = y;
        }
        f = f.min(self.tr[x] as u64);
        x = q;
        while self.parent[x] != TERMINAL {
            let pd = self.parent[x] as usize;
            f = f.min(self.res[x][pd]);
            x = self.nb(x, pd);
        }
        f = f.min(self.tr[x].unsigned_abs());

        self.res[p][d] -= f;
        self.res[q][d ^ 1] += f;

        x = p;
        loop {
            if self.parent[x] == TERMINAL {
                self.tr[x] -= f as i64;
                if self.tr[x] == 0 {
                    self.orphan_front(x);
                }
                break;
            }
            let pd = self.parent[x] as usize;
            let y = self.nb(x, pd);
            self.res[y][pd ^ 1] -= f;
            self.res[x][pd] += f;
            if self.res[y][pd ^ 1] == 0 {
                self.orphan_front(x);
            }
            x = y;
        }
        x = q;
        loop {
            if self.parent[x] == TERMINAL {
                self.tr[x] += f as i64;
                if self.tr[x] == 0 {
                    self.orphan_front(x);
                }
                break;
            }
            let pd = self.parent[x] as usize;
            let y = self.nb(x, pd);
            self.res[x][pd] -= f;
            self.res[y][pd ^ 1] += f;
            if self.res[x][pd] == 0 {
                self.orphan_front(x);
            }
            x = y;
        }
        self.flow = self.flow.saturating_add(f);
    }

    fn adopt(&mut self) {
        while let Some(x) = self.orphans.pop_front() {
            self.process_orphan(x as usize);
        }
    }

    /// Residual capacity of the tree arc between `x` and its candidate parent `y = nb(x, d)`.
    #[inline]
    fn tree_cap(&self, t: u8, x: usize, y: usize, d: usize) -> u64 {
        if t == SOURCE {
            self.res[y][d ^ 1]
        } else {
            self.res[x][d]
        }
    }

    fn process_orphan(&mut self, x: usize) {
        let t = self.tree[x];
        let mut best: Option<usize> = None;
        let mut best_dist = u64::MAX;
        for d in 0..6 {
            if !self.has(x, d) {
                continue;
            }
            let y = self.nb(x, d);
            if self.tree[y] != t || self.tree_cap(t, x, y, d) == 0 {
                continue;
            }
            // Does y still lead back to the terminal?
            let mut j = y;
            let mut len = 0u64;
            let rooted = loop {
                if self.ts[j] == self.time {
                    len += self.dist[j];
                    break true;
                }
                let pj = self.parent[j];
                len += 1;
                if pj == TERMINAL {
                    self.ts[j] = self.time;
                    self.dist[j] = 1;
                    break true;
                }
                if pj == ORPHAN {
                    break false;
                }
                j = self.nb(j, pj as usize);
            };
            if !rooted {
                continue;
            }
            if len < best_dist {
                best = Some(d);
                best_dist = len;
            }
            let mut j = y;
            while self.ts[j] != self.time {
                self.ts[j] = self.time;
                self.dist[j] = len;
                len -= 1;
                j = self.nb(j, self.parent[j] as usize);
            }
        }

        if let Some(d) = best {
            self.parent[x] = d as u8;
            self.ts[x] = self.time;
            self.dist[x] = best_dist + 1;
            return;
        }

        self.tree[x] = FREE;
        self.parent[x] = NO_PARENT;
        for d in 0..6 {
            if !self.has(x, d) {
                continue;
            }
            let y = self.nb(x, d);
            if self.tree[y] != t {
                continue;
            }
            if self.tree_cap(t, x, y, d) > 0 {
                self.activate(y);
            }
            if self.parent[y] == (d ^ 1) as u8 {
                self.orphan_rear(y);
            }
        }
    }

    fn source_reachable(&self) -> Vec<u8> {
        let n = self.tr.len();
        let mut seen = vec![0u8; n];
        let mut stack: Vec<usize> = Vec::new();
        for (i, &t) in self.tr.iter().enumerate() {
            if t > 0 {
                seen[i] = 1;
                stack.push(i);
            }
        }
        while let Some(a) = stack.pop() {
            for d in 0..6 {
                if self.has(a, d) && self.res[a][d] > 0 {
                    let b = self.nb(a, d);
                    if seen[b] == 0 {
                        seen[b] = 1;
                        stack.push(b);
                    }
                }
            }
        }
        seen
    }
}
